"""Read and write programs in the CPLEX-style LP text format.

Only the subset emitted by :func:`dumps` is understood by :func:`loads`:
one objective, one constraint per line, explicit ``Bounds``, ``General``
and ``Binary`` sections.  Floats are written with ``repr`` so a dump/load
round trip is exact.
"""

from __future__ import annotations

import math
import re

import numpy as np

from ..errors import ParseError
from .model import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, ProgramBuilder

_NAME_OK = re.compile(r"^[A-DF-Za-df-z_][A-Za-z0-9_.]*$")


def _num(v):
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return repr(float(v))


def _expr(pairs, names):
    parts = []
    for j, a in pairs:
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {_num(abs(a))} {names[j]}")
    if not parts:
        return "0 " + names[0] if names else "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def dumps(prog, comment=None):
    for name in prog.names + prog.row_names:
        if not _NAME_OK.match(name):
            raise ValueError(f"name {name!r} is not LP-format safe")
    names = prog.names
    out = []
    if comment:
        for line in comment.splitlines():
            out.append(f"\\ {line}")
    out.append("Maximize")
    obj = [(j, a) for j, a in enumerate(prog.objective) if a != 0]
    out.append(f" obj: {_expr(obj, names)}")
    out.append("Subject To")
    A = prog.A
    for i, rname in enumerate(prog.row_names):
        start, end = A.indptr[i], A.indptr[i + 1]
        pairs = list(zip(A.indices[start:end].tolist(), A.data[start:end].tolist()))
        out.append(f" {rname}: {_expr(pairs, names)} {prog.senses[i]} {_num(prog.rhs[i])}")
    out.append("Bounds")
    for j, name in enumerate(names):
        if prog.vtype[j] == BINARY:
            continue
        lo, hi = prog.lb[j], prog.ub[j]
        if lo == hi:
            out.append(f" {name} = {_num(lo)}")
        elif lo == -math.inf and hi == math.inf:
            out.append(f" {name} free")
        else:
            out.append(f" {_num(lo)} <= {name} <= {_num(hi)}")
    gens = [n for n, t in zip(names, prog.vtype) if t == INTEGER]
    bins = [n for n, t in zip(names, prog.vtype) if t == BINARY]
    if gens:
        out.append("General")
        out.extend(f" {n}" for n in gens)
    if bins:
        out.append("Binary")
        out.extend(f" {n}" for n in bins)
    out.append("End")
    return "\n".join(out) + "\n"


_TERM = re.compile(r"([+-])?\s*([0-9.eE+\-]+|inf)?\s*([A-Za-z_][A-Za-z0-9_.]*)")


def _parse_expr(text, lineno):
    terms = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"cannot parse expression near {text[pos:pos + 20]!r}", f"line {lineno}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = float(m.group(2)) if m.group(2) else 1.0
        terms.append((m.group(3), sign * coef))
        pos = m.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return terms


def loads(text):
    """Parse LP text into a :class:`Program`."""
    section = None
    obj_terms = []
    rows = []
    bounds = {}
    kinds = {}
    order = []
    seen = set()

    def note(name):
        if name not in seen:
            seen.add(name)
            order.append(name)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "maximise", "max"):
            section = "obj"
            continue
        if low in ("minimize", "minimise", "min"):
            raise ParseError("only maximization programs are supported", f"line {lineno}")
        if low in ("subject to", "st", "s.t."):
            section = "rows"
            continue
        if low == "bounds":
            section = "bounds"
            continue
        if low in ("general", "generals"):
            section = "gen"
            continue
        if low in ("binary", "binaries"):
            section = "bin"
            continue
        if low == "end":
            section = "end"
            continue
        if section == "obj":
            _, _, expr = line.partition(":")
            obj_terms = _parse_expr(expr, lineno)
            for n, _ in obj_terms:
                note(n)
        elif section == "rows":
            name, sep, rest = line.partition(":")
            if not sep:
                raise ParseError("constraint needs a name", f"line {lineno}")
            m = re.match(r"^(.*?)(<=|>=|=)\s*(\S+)$", rest.strip())
            if not m:
                raise ParseError("constraint needs <=, >= or = and a right-hand side", f"line {lineno}")
            terms = _parse_expr(m.group(1), lineno)
            for n, _ in terms:
                note(n)
            rows.append((name.strip(), terms, m.group(2), float(m.group(3))))
        elif section == "bounds":
            parts = line.split()
            if len(parts) == 2 and parts[1].lower() == "free":
                bounds[parts[0]] = (-math.inf, math.inf)
            elif len(parts) == 3 and parts[1] == "=":
                v = float(parts[2])
                bounds[parts[0]] = (v, v)
            elif len(parts) == 5 and parts[1] == "<=" and parts[3] == "<=":
                bounds[parts[2]] = (float(parts[0]), float(parts[4]))
            else:
                raise ParseError(f"unsupported bound syntax {line!r}", f"line {lineno}")
            note(parts[2] if len(parts) == 5 else parts[0])
        elif section in ("gen", "bin"):
            for n in line.split():
                kinds[n] = INTEGER if section == "gen" else BINARY
                note(n)
        else:
            raise ParseError(f"content outside any section: {line!r}", f"line {lineno}")
    if section != "end":
        raise ParseError("missing End marker", "EOF")

    b = ProgramBuilder()
    obj = dict(obj_terms)
    for name in order:
        lo, hi = bounds.get(name, (0.0, math.inf))
        b.add_var(name, lo, hi, kinds.get(name, CONTINUOUS), obj.get(name, 0.0))
    for name, terms, sense, rhs in rows:
        b.add_row(name, [(b.var(n), a) for n, a in terms], {"<=": LE, ">=": GE, "=": EQ}[sense], rhs)
    return b.build()


def same_program(a, b):
    """Structural equality, insensitive to variable order."""
    if set(a.names) != set(b.names) or a.row_names != b.row_names:
        return False
    perm = np.array([b.index(n) for n in a.names])
    return (np.array_equal(a.lb, b.lb[perm]) and np.array_equal(a.ub, b.ub[perm])
            and a.vtype == tuple(b.vtype[k] for k in perm)
            and np.array_equal(a.objective, b.objective[perm])
            and a.senses == b.senses and np.array_equal(a.rhs, b.rhs)
            and (a.A != b.A[:, perm]).nnz == 0)
