"""Branch-and-bound and LP-rounding heuristic over :class:`Program`."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from ..errors import InvalidInput
from .model import GE, LE
from .simplex import LpStatus, solve_lp


class Mode(str, Enum):
    EXACT = "exact"
    HEURISTIC = "heuristic"


class MilpStatus(str, Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNKNOWN = "unknown"  # limits hit before any incumbent was found


@dataclass(frozen=True)
class SolverConfig:
    mode: Mode = Mode.HEURISTIC
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    gap_tol: float = 1e-4
    node_limit: int = 100_000
    time_limit_s: float = math.inf
    polish: bool = True
    backend: str = "builtin"

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        for name in ("feas_tol", "int_tol", "gap_tol"):
            if not getattr(self, name) > 0:
                raise InvalidInput(f"{name} must be positive")
        if self.node_limit < 1:
            raise InvalidInput("node_limit must be >= 1")

    def to_dict(self):
        d = asdict(self)
        d["mode"] = self.mode.value
        if not math.isfinite(self.time_limit_s):
            d["time_limit_s"] = None
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("time_limit_s") is None:
            d["time_limit_s"] = math.inf
        return cls(**d)


@dataclass
class MilpSolution:
    status: MilpStatus
    x: np.ndarray | None
    objective: float
    bound: float = math.nan
    nodes: int = 0
    lp_solves: int = 0
    incumbents: list = field(default_factory=list)

    @property
    def gap(self):
        if self.x is None or not math.isfinite(self.bound):
            return math.inf
        return max(0.0, self.bound - self.objective)


class _Ctx:
    def __init__(self, prog, cfg):
        self.prog = prog
        self.cfg = cfg
        self.lp_solves = 0

    def lp(self, lb, ub, objective=None, maximize=True, extra=None):
        prog = self.prog
        A, senses, rhs = prog.A, prog.senses, prog.rhs
        if extra is not None:
            import scipy.sparse as sp
            row, sense, val = extra
            A = sp.vstack([A, sp.csr_matrix(row.reshape(1, -1))], format="csr")
            senses = senses + (sense,)
            rhs = np.append(rhs, val)
        self.lp_solves += 1
        c = prog.objective if objective is None else objective
        return solve_lp(c, A, senses, rhs, lb, ub, maximize=maximize, feas_tol=self.cfg.feas_tol)


def solve_milp(prog, cfg=None):
    """Maximize ``prog``; see :class:`SolverConfig` for the two modes.

    Accepts a :class:`~mpcqkd.solver.model.Program` or any object carrying
    one in a ``program`` attribute.
    """
    cfg = cfg or SolverConfig()
    prog = getattr(prog, "program", prog)
    if cfg.backend != "builtin":
        from .backends import get_backend
        return get_backend(cfg.backend).solve(prog, cfg)
    ctx = _Ctx(prog, cfg)
    root = ctx.lp(prog.lb, prog.ub)
    if root.status is LpStatus.INFEASIBLE:
        return MilpSolution(MilpStatus.INFEASIBLE, None, math.nan, lp_solves=ctx.lp_solves)
    if root.status is LpStatus.UNBOUNDED:
        raise InvalidInput("LP relaxation is unbounded; program is not well-formed")
    if cfg.mode is Mode.HEURISTIC:
        sol = _round_heuristic(ctx, root.x)
        if sol.x is not None:
            sol.bound = root.objective
    else:
        sol = _branch_and_bound(ctx, root)
    if sol.x is not None and cfg.polish and prog.secondary is not None:
        sol.x = _polish(ctx, sol.x, sol.objective)
        sol.objective = float(prog.objective @ sol.x)
    sol.lp_solves = ctx.lp_solves
    return sol


def _fixed_bounds(prog, x_int):
    lb = prog.lb.copy()
    ub = prog.ub.copy()
    ints = prog.integer_mask
    lb[ints] = x_int[ints]
    ub[ints] = x_int[ints]
    return lb, ub


def _snap_integers(prog, x):
    x = x.copy()
    ints = prog.integer_mask
    x[ints] = np.round(x[ints])
    return x


def _polish(ctx, x, objective):
    """Re-solve with integers fixed, minimizing the tie-break objective.

    The primary objective is held at ``objective`` (minus a 1e-9 relative
    slack) so the optimum value is preserved.
    """
    prog = ctx.prog
    lb, ub = _fixed_bounds(prog, x)
    floor = objective - 1e-9 * max(1.0, abs(objective))
    res = ctx.lp(lb, ub, objective=prog.secondary, maximize=False,
                 extra=(prog.objective, GE, floor))
    if res.status is not LpStatus.OPTIMAL:
        return x
    out = res.x.copy()
    ints = prog.integer_mask
    out[ints] = x[ints]
    return out


# -- heuristic ----------------------------------------------------------------

def _int_rows(prog):
    """Integer-only rows normalized to ``a @ x <= b`` form."""
    rows = []
    A = prog.A
    for i in prog.integer_only_rows():
        cols = A.indices[A.indptr[i]:A.indptr[i + 1]]
        vals = A.data[A.indptr[i]:A.indptr[i + 1]].copy()
        b = prog.rhs[i]
        sense = prog.senses[i]
        if sense == GE:
            rows.append((cols, -vals, -b))
        elif sense == LE:
            rows.append((cols, vals, b))
        else:
            rows.append((cols, vals, b))
            rows.append((cols, -vals, -b))
    return rows


def _violated(rows, x, tol=1e-9):
    return [r for r in rows if r[1] @ x[r[0]] > r[2] + tol * max(1.0, abs(r[2]))]


def _round_heuristic(ctx, x_lp):
    """Relaxation -> fix binaries -> re-solve -> round -> repair -> greedy +1 -> flow LP.

    Binaries are fixed first (on wherever the relaxation uses them) and the
    LP is re-solved with general integers still continuous, so the device
    counts are chosen against the true trust cost instead of the fractional
    one the relaxation saw.
    """
    prog = ctx.prog
    ints = prog.integer_mask
    bins = prog.binary_mask
    gens = ints & ~bins
    tol = ctx.cfg.int_tol
    rows = _int_rows(prog)

    on = bins & (x_lp > tol)
    x = np.where(ints, prog.lb, 0.0)
    # switch off the least-used binaries until the integer-only rows can hold
    # with every general integer at its lower bound
    for j in sorted(np.flatnonzero(on), key=lambda j: (x_lp[j], j)):
        x[bins] = on[bins]
        if not _violated(rows, x):
            break
        on[j] = False
    x[bins] = on[bins]
    lb = prog.lb.copy()
    ub = prog.ub.copy()
    lb[bins] = ub[bins] = x[bins]
    mid = ctx.lp(lb, ub)
    x_ref = mid.x if mid.status is LpStatus.OPTIMAL else x_lp

    floored = np.floor(x_ref + tol)
    # second start keeps at least one device wherever the relaxation placed any,
    # so no pair loses its only route to rounding
    kept = np.where(gens & (x_ref > tol), np.maximum(floored, 1.0), floored)
    best = MilpSolution(MilpStatus.UNKNOWN, None, math.nan)
    for start, shrink_largest in ((floored, False), (kept, True)):
        sol = _complete(ctx, rows, start, x_ref, on, shrink_largest)
        if sol.x is not None and (best.x is None or sol.objective > best.objective):
            best = sol
    return best


def _complete(ctx, rows, start, x_ref, on, shrink_largest):
    """Repair ``start`` into an integer point, add devices greedily, solve flows."""
    prog = ctx.prog
    ints = prog.integer_mask
    bins = prog.binary_mask
    gens = ints & ~bins
    tol = ctx.cfg.int_tol
    x = x_ref.copy()
    x[gens] = start[gens]
    x[bins] = on[bins]
    x[ints] = np.clip(x[ints], prog.lb[ints], prog.ub[ints])

    for _ in range(10 * prog.n_vars + 10):
        bad = _violated(rows, x)
        if not bad:
            break
        cols, vals, _b = bad[0]
        # shrink a general integer (least supported, or largest count), else drop a binary
        key = (lambda j: (-x[j], j)) if shrink_largest else (lambda j: (x_ref[j], j))
        cand = [key(j) for j, a in zip(cols, vals) if a > 0 and gens[j] and x[j] > prog.lb[j]]
        if not cand:
            cand = [(x_ref[j], j) for j, a in zip(cols, vals) if a > 0 and x[j] > prog.lb[j]]
        if not cand:
            cand = [(-x_ref[j], j) for j, a in zip(cols, vals) if a < 0 and x[j] < prog.ub[j]]
            if not cand:
                return MilpSolution(MilpStatus.UNKNOWN, None, math.nan)
            _, j = min(cand)
            x[j] += 1.0
            continue
        _, j = min(cand)
        x[j] = prog.lb[j] if bins[j] else x[j] - 1.0
    else:
        return MilpSolution(MilpStatus.UNKNOWN, None, math.nan)

    # greedy +1 on general integers, largest shortfall against the relaxation first
    frac = x_ref - x
    order = sorted((j for j in np.flatnonzero(gens) if frac[j] > tol),
                   key=lambda j: (-frac[j], j))
    for j in order:
        if x[j] + 1 > prog.ub[j]:
            continue
        trial = x.copy()
        trial[j] += 1.0
        for _ in range(4):
            bad = _violated(rows, trial)
            if not bad:
                break
            # a violated linking row may be fixed by switching on a binary
            fixed = False
            for cols, vals, _b in bad:
                for jj, a in zip(cols, vals):
                    if a < 0 and bins[jj] and trial[jj] < 1.0:
                        trial[jj] = 1.0
                        fixed = True
                        break
            if not fixed:
                break
        if not _violated(rows, trial):
            x = trial

    lb, ub = _fixed_bounds(prog, x)
    res = ctx.lp(lb, ub)
    if res.status is not LpStatus.OPTIMAL:
        return MilpSolution(MilpStatus.UNKNOWN, None, math.nan)
    xs = _snap_integers(prog, res.x)
    obj = float(prog.objective @ xs)
    return MilpSolution(MilpStatus.FEASIBLE, xs, obj, incumbents=[obj])


# -- branch and bound ---------------------------------------------------------

@dataclass
class BnBNode:
    bound: float
    lb: np.ndarray
    ub: np.ndarray
    depth: int
    branch_var: int = -1


def _pick_branch(prog, x, tol):
    """Most fractional binary, else most fractional integer; ties -> lowest id."""
    frac = np.abs(x - np.round(x))
    for mask in (prog.binary_mask, prog.integer_mask & ~prog.binary_mask):
        cand = np.flatnonzero(mask & (frac > tol))
        if len(cand):
            dist = np.abs((x[cand] - np.floor(x[cand])) - 0.5)
            return int(cand[np.argmin(dist)])
    return -1


def _branch_and_bound(ctx, root):
    prog = ctx.prog
    cfg = ctx.cfg
    start = time.monotonic()
    incumbent = None
    inc_obj = -math.inf
    history = []

    warm = _round_heuristic(ctx, root.x)
    if warm.x is not None:
        incumbent, inc_obj = warm.x, warm.objective
        history.append(inc_obj)

    def prune_level():
        return inc_obj + max(cfg.gap_tol * max(1.0, abs(inc_obj)), 1e-12)

    open_nodes = [BnBNode(root.objective, prog.lb.copy(), prog.ub.copy(), 0)]
    root_solution = root
    nodes = 0
    limited = False
    while open_nodes:
        if nodes >= cfg.node_limit or time.monotonic() - start > cfg.time_limit_s:
            limited = True
            break
        if nodes and nodes % 1000 == 0:
            open_nodes.sort(key=lambda nd: nd.bound)  # best bound on top
        node = open_nodes.pop()
        if incumbent is not None and node.bound <= prune_level():
            continue
        if root_solution is not None:
            res, root_solution = root_solution, None
        else:
            res = ctx.lp(node.lb, node.ub)
        nodes += 1
        if res.status is not LpStatus.OPTIMAL:
            continue
        bound = min(res.objective, node.bound)
        if incumbent is not None and bound <= prune_level():
            continue
        j = _pick_branch(prog, res.x, cfg.int_tol)
        if j < 0:
            xs = _snap_integers(prog, res.x)
            lb, ub = _fixed_bounds(prog, xs)
            fixed = ctx.lp(lb, ub)
            if fixed.status is LpStatus.OPTIMAL:
                xs = _snap_integers(prog, fixed.x)
                obj = float(prog.objective @ xs)
                if obj > inc_obj:
                    incumbent, inc_obj = xs, obj
                    history.append(obj)
            continue
        v = res.x[j]
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(v)
        # depth-first, up-branch explored first
        open_nodes.append(BnBNode(bound, node.lb, down_ub, node.depth + 1, j))
        open_nodes.append(BnBNode(bound, up_lb, node.ub, node.depth + 1, j))

    if incumbent is None:
        status = MilpStatus.UNKNOWN if limited else MilpStatus.INFEASIBLE
        return MilpSolution(status, None, math.nan, nodes=nodes, incumbents=history)
    if limited:
        best_open = max([nd.bound for nd in open_nodes], default=inc_obj)
        return MilpSolution(MilpStatus.FEASIBLE, incumbent, inc_obj, max(best_open, inc_obj),
                            nodes, incumbents=history)
    return MilpSolution(MilpStatus.OPTIMAL, incumbent, inc_obj, inc_obj, nodes, incumbents=history)
