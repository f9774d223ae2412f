"""Independent constraint re-check of a candidate assignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EQ, GE, LE


@dataclass(frozen=True)
class Violation:
    kind: str  # "row", "bound" or "integrality"
    name: str
    amount: float

    def __str__(self):
        return f"{self.kind} {self.name}: off by {self.amount:.3g}"


def verify_solution(prog, x, tol=1e-6):
    """Every violated row, bound and integrality requirement of ``x``.

    Rows are checked in relative terms: a violation counts when it exceeds
    ``tol * (1 + sum_j |a_ij x_j| + |b_i|)``.  Integrality is exact.
    """
    prog = getattr(prog, "program", prog)
    x = np.asarray(getattr(x, "x", x), dtype=float)
    out = []
    for j, name in enumerate(prog.names):
        lo, hi = prog.lb[j], prog.ub[j]
        slack = tol * (1.0 + abs(x[j]))
        if x[j] < lo - slack:
            out.append(Violation("bound", name, lo - x[j]))
        elif x[j] > hi + slack:
            out.append(Violation("bound", name, x[j] - hi))
        if prog.vtype[j] != "C" and x[j] != np.round(x[j]):
            out.append(Violation("integrality", name, abs(x[j] - np.round(x[j]))))
    A = prog.A
    for i, name in enumerate(prog.row_names):
        start, end = A.indptr[i], A.indptr[i + 1]
        cols = A.indices[start:end]
        vals = A.data[start:end]
        terms = vals * x[cols]
        lhs = float(terms.sum())
        b = prog.rhs[i]
        scale = 1.0 + float(np.abs(terms).sum()) + abs(b)
        sense = prog.senses[i]
        if sense == LE:
            gap = lhs - b
        elif sense == GE:
            gap = b - lhs
        elif sense == EQ:
            gap = abs(lhs - b)
        else:
            raise ValueError(f"unknown sense {sense!r}")
        if gap > tol * scale:
            out.append(Violation("row", name, gap))
    return out
