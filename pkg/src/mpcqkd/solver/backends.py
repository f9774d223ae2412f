"""Solve-backend boundary.

A backend takes a :class:`Program` (or its LP-format text) and returns a
:class:`MilpSolution`.  ``builtin`` is the in-package simplex plus
branch-and-bound; ``highs`` delegates to SciPy's HiGHS bindings and exists
for cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from ..errors import InvalidInput
from . import lpformat
from .model import EQ, GE, LE


class BuiltinBackend:
    name = "builtin"

    def solve(self, prog, cfg):
        from .milp import solve_milp
        return solve_milp(prog, replace(cfg, backend="builtin"))


class HighsBackend:
    name = "highs"

    def solve(self, prog, cfg):
        from .milp import MilpSolution, MilpStatus, Mode
        x, status = _highs(prog, prog.objective, maximize=True, integral=True,
                           gap=cfg.gap_tol if cfg.mode is Mode.EXACT else 1e-3,
                           time_limit=cfg.time_limit_s)
        if x is None:
            st = MilpStatus.INFEASIBLE if status == 2 else MilpStatus.UNKNOWN
            return MilpSolution(st, None, math.nan)
        ints = prog.integer_mask
        x[ints] = np.round(x[ints])
        obj = float(prog.objective @ x)
        if cfg.polish and prog.secondary is not None:
            lb = prog.lb.copy()
            ub = prog.ub.copy()
            lb[ints] = x[ints]
            ub[ints] = x[ints]
            floor = obj - 1e-9 * max(1.0, abs(obj))
            y, _ = _highs(prog.with_bounds(lb, ub), prog.secondary, maximize=False, integral=False,
                          extra=(prog.objective, floor))
            if y is not None:
                y[ints] = x[ints]
                x = y
                obj = float(prog.objective @ x)
        st = MilpStatus.OPTIMAL if status == 0 else MilpStatus.FEASIBLE
        return MilpSolution(st, x, obj, obj, incumbents=[obj])


def _highs(prog, c, maximize, integral, gap=1e-9, time_limit=math.inf, extra=None):
    A = prog.A
    lo = np.where([s in (GE, EQ) for s in prog.senses], prog.rhs, -np.inf)
    hi = np.where([s in (LE, EQ) for s in prog.senses], prog.rhs, np.inf)
    cons = [LinearConstraint(A, lo, hi)]
    if extra is not None:
        cons.append(LinearConstraint(extra[0].reshape(1, -1), [extra[1]], [np.inf]))
    opts = {"mip_rel_gap": gap, "presolve": True}
    if math.isfinite(time_limit):
        opts["time_limit"] = time_limit
    res = milp(-c if maximize else c, constraints=cons,
               integrality=prog.integer_mask.astype(int) if integral else None,
               bounds=Bounds(prog.lb, prog.ub), options=opts)
    if res.x is None:
        return None, res.status
    return np.array(res.x, float), res.status


_BACKENDS = {"builtin": BuiltinBackend(), "highs": HighsBackend()}


def get_backend(name):
    try:
        return _BACKENDS[name]
    except KeyError:
        raise InvalidInput(f"unknown solver backend {name!r}; choose from {sorted(_BACKENDS)}") from None


def solve_text(lp_text, cfg):
    """Solve a program given in LP text; the interchange entry point."""
    prog = lpformat.loads(lp_text)
    return get_backend(cfg.backend).solve(prog, cfg), prog
