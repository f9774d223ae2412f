"""Bounded-variable revised simplex.

The basis inverse is kept as a sparse LU factorization of the basis matrix
plus a short product-form eta file, refactorized every ``REFACTOR_EVERY``
pivots.  Pricing is Dantzig (largest reduced cost) with a Harris two-pass
ratio test; after ``10 * rows`` consecutive degenerate pivots pricing and
the ratio test switch to Bland's rule until a nondegenerate pivot occurs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import SolverError
from .model import EQ, GE, LE

REFACTOR_EVERY = 64

_BASIC, _AT_LO, _AT_HI, _FREE, _FIXED = 0, 1, 2, 3, 4


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    objective: float
    iterations: int
    bland_pivots: int = 0


class _Basis:
    def __init__(self, K, basis):
        self.K = K
        self.m = K.shape[0]
        self.refactor(basis)

    def refactor(self, basis):
        B = self.K[:, basis].tocsc()
        try:
            with np.errstate(all="ignore"):
                self.lu = spla.splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise SolverError(f"singular basis during refactorization: {exc}") from exc
        self.etas = []

    def ftran(self, a):
        v = self.lu.solve(a)
        for r, w in self.etas:
            vr = v[r] / w[r]
            v -= w * vr
            v[r] = vr
        return v

    def btran(self, c):
        u = np.array(c, dtype=float)
        for r, w in reversed(self.etas):
            ur = u[r]
            u[r] = 0.0
            u[r] = (ur - w @ u) / w[r]
        return self.lu.solve(u, trans="T")

    def push(self, r, w):
        self.etas.append((r, w))


def _column(K, j, m):
    col = np.zeros(m)
    start, end = K.indptr[j], K.indptr[j + 1]
    col[K.indices[start:end]] = K.data[start:end]
    return col


def solve_lp(c, A, senses, rhs, lb, ub, maximize=True, feas_tol=1e-6, max_iter=None):
    """Solve ``max/min c@x`` s.t. ``A x (senses) rhs``, ``lb <= x <= ub``.

    Returns an :class:`LpSolution`; raises :class:`SolverError` on numerical
    breakdown or when the iteration budget is exhausted.
    """
    A = sp.csr_matrix(A, dtype=float)
    m, n = A.shape
    c = np.asarray(c, float)
    rhs = np.asarray(rhs, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    if np.any(lb > ub + feas_tol):
        return LpSolution(LpStatus.INFEASIBLE, None, math.nan, 0)
    ub = np.maximum(ub, lb)
    if m == 0:
        return _solve_unconstrained(c, lb, ub, maximize)

    # structural x is solved as x' = x * col_max; see _scale_factors
    scale, col_max = _scale_factors(A, lb < ub)
    As = (sp.diags(scale) @ A @ sp.diags(1.0 / col_max)).tocsc()
    bs = rhs * scale
    c_orig, lb_orig, ub_orig = c, lb, ub
    c = c / col_max
    lb = lb * col_max
    ub = ub * col_max

    slack_lo = np.zeros(m)
    slack_hi = np.zeros(m)
    for i, s in enumerate(senses):
        if s == LE:
            slack_hi[i] = math.inf
        elif s == GE:
            slack_lo[i] = -math.inf
        elif s != EQ:
            raise ValueError(f"unknown row sense {s!r}")

    # structural values start at a finite bound (or 0 when free)
    x0 = np.where(np.isfinite(lb), lb, np.where(np.isfinite(ub), ub, 0.0))
    resid = bs - As @ x0
    slack_val = np.clip(resid, slack_lo, slack_hi)
    art = resid - slack_val
    need_art = np.abs(art) > 1e-12
    art_sign = np.where(art >= 0, 1.0, -1.0)

    N = n + 2 * m
    K = sp.hstack([As, sp.identity(m), sp.diags(art_sign)], format="csc")
    lo = np.concatenate([lb, slack_lo, np.zeros(m)])
    hi = np.concatenate([ub, slack_hi, np.where(need_art, math.inf, 0.0)])
    x = np.concatenate([x0, slack_val, np.abs(art)])
    basis = np.array([n + m + i if need_art[i] else n + i for i in range(m)])

    state = np.empty(N, dtype=np.int8)
    for j in range(N):
        if lo[j] == hi[j]:
            state[j] = _FIXED
        elif math.isfinite(lo[j]) and x[j] == lo[j]:
            state[j] = _AT_LO
        elif math.isfinite(hi[j]) and x[j] == hi[j]:
            state[j] = _AT_HI
        else:
            state[j] = _FREE
    state[basis] = _BASIC

    budget = max_iter if max_iter is not None else 50 * (m + n) + 1000
    solver = _Simplex(K, bs, lo, hi, x, basis, state, budget)

    if need_art.any():
        cost1 = np.zeros(N)
        cost1[n + m:] = 1.0
        solver.run(cost1, phase=1)
        infeas = float(np.sum(solver.x[n + m:]))
        if infeas > feas_tol * max(1.0, float(np.max(np.abs(bs)))):
            return LpSolution(LpStatus.INFEASIBLE, None, math.nan, solver.iterations,
                              solver.bland_pivots)
        # artificials are pinned at zero from here on
        solver.hi[n + m:] = 0.0
        solver.x[n + m:] = np.where(solver.state[n + m:] == _BASIC, solver.x[n + m:], 0.0)
        nb_art = (solver.state[n + m:] != _BASIC)
        solver.state[n + m:][nb_art] = _FIXED

    cost2 = np.zeros(N)
    cost2[:n] = -c if maximize else c
    status = solver.run(cost2, phase=2)
    # entries below the pivot tolerance are skipped by the ratio test; over a
    # long step they can leave a basic slightly outside its bounds
    for _ in range(5):
        if status == LpStatus.UNBOUNDED:
            break
        solver.recompute()
        if solver.infeasibility() is None:
            break
        if solver.run(None, phase=2, restore=True) is not LpStatus.OPTIMAL:
            # the summed violation is at a minimum above tolerance: the
            # constraints only held within phase 1's looser test
            return LpSolution(LpStatus.INFEASIBLE, None, math.nan, solver.iterations,
                              solver.bland_pivots)
        status = solver.run(cost2, phase=2)
    else:
        raise SolverError("primal feasibility kept drifting after repeated restoration")
    if status == LpStatus.UNBOUNDED:
        return LpSolution(LpStatus.UNBOUNDED, None, math.inf if maximize else -math.inf,
                          solver.iterations, solver.bland_pivots)

    solver.recompute()
    xs = solver.x[:n] / col_max
    # snap values that drifted just outside their bounds
    xs = np.minimum(np.maximum(xs, lb_orig), ub_orig)
    viol = _max_violation(A, senses, rhs, xs)
    if viol > feas_tol:
        raise SolverError(f"primal residual {viol:.3g} exceeds tolerance {feas_tol:g}")
    return LpSolution(LpStatus.OPTIMAL, xs, float(c_orig @ xs), solver.iterations,
                      solver.bland_pivots)


def _pow2(v):
    return np.exp2(np.round(np.log2(v)))


def _scale_factors(A, free):
    """Row multipliers and column divisors for the working matrix.

    A few geometric-mean passes first pull tiny and huge entries toward 1
    (capacity rates can sit nine orders below the budget coefficients), then
    rows and columns are equilibrated so every largest |a_ij| is 1.  Factors
    are powers of two, so scaling adds no rounding error.  Fixed columns are
    left out of the row factors: a big-M on a fixed binary would otherwise
    shrink the row and inflate its feasibility tolerance in original units.
    """
    m, n = A.shape
    coo = A.tocoo()
    rows, cols = coo.row, coo.col
    mag = np.abs(coo.data)
    keep = mag > 0
    rows, cols, mag = rows[keep], cols[keep], mag[keep]
    use = free[cols]
    # rows touching only fixed columns fall back to all their entries
    has_free = np.zeros(m, bool)
    has_free[rows[use]] = True
    use = use | ~has_free[rows]
    r = np.ones(m)
    cdiv = np.ones(n)

    def row_extremes(vals, mask):
        hi = np.zeros(m)
        lo = np.full(m, np.inf)
        np.maximum.at(hi, rows[mask], vals[mask])
        np.minimum.at(lo, rows[mask], vals[mask])
        return hi, lo

    def col_extremes(vals):
        hi = np.zeros(n)
        lo = np.full(n, np.inf)
        np.maximum.at(hi, cols, vals)
        np.minimum.at(lo, cols, vals)
        return hi, lo

    for _ in range(4):
        cur = mag * r[rows] / cdiv[cols]
        hi, lo = row_extremes(cur, use)
        ok = hi > 0
        r[ok] /= _pow2(np.sqrt(hi[ok] * lo[ok]))
        cur = mag * r[rows] / cdiv[cols]
        hi, lo = col_extremes(cur)
        ok = hi > 0
        cdiv[ok] *= _pow2(np.sqrt(hi[ok] * lo[ok]))
    cur = mag * r[rows] / cdiv[cols]
    hi, _ = row_extremes(cur, use)
    ok = hi > 0
    r[ok] /= _pow2(hi[ok])
    cur = mag * r[rows] / cdiv[cols]
    hi, _ = col_extremes(cur)
    ok = hi > 0
    cdiv[ok] *= _pow2(hi[ok])
    return r, cdiv


def _solve_unconstrained(c, lb, ub, maximize):
    sign = 1.0 if maximize else -1.0
    x = np.where(sign * c > 0, ub, np.where(sign * c < 0, lb, np.where(np.isfinite(lb), lb, 0.0)))
    x = np.where(np.isfinite(x), x, np.where(np.isfinite(lb), lb, 0.0))
    if np.any((sign * c > 0) & ~np.isfinite(ub)) or np.any((sign * c < 0) & ~np.isfinite(lb)):
        return LpSolution(LpStatus.UNBOUNDED, None, sign * math.inf, 0)
    return LpSolution(LpStatus.OPTIMAL, x, float(c @ x), 0)


def _max_violation(A, senses, rhs, x):
    ax = A @ x
    worst = 0.0
    absrow = abs(A) @ np.abs(x)
    for i, s in enumerate(senses):
        scale = 1.0 + absrow[i] + abs(rhs[i])
        if s == LE:
            v = ax[i] - rhs[i]
        elif s == GE:
            v = rhs[i] - ax[i]
        else:
            v = abs(ax[i] - rhs[i])
        worst = max(worst, v / scale)
    return worst


class _Simplex:
    dual_tol = 1e-9
    piv_tol = 1e-9
    primal_tol = 1e-9

    def __init__(self, K, b, lo, hi, x, basis, state, budget):
        self.K = K
        self.KT = K.T.tocsr()
        self.b = b
        self.lo = lo
        self.hi = hi
        self.x = x
        self.basis = basis
        self.state = state
        self.m = K.shape[0]
        self.iterations = 0
        self.bland_pivots = 0
        self.budget = budget
        self.B = _Basis(K, basis)

    def recompute(self):
        self.B.refactor(self.basis)
        xn = self.x.copy()
        xn[self.basis] = 0.0
        rhs = self.b - self.K @ xn
        xb = self.B.ftran(rhs)
        # iterative refinement: ill-conditioned bases lose digits in one solve
        for _ in range(3):
            resid = rhs - self.K[:, self.basis] @ xb
            if np.abs(resid).max() <= 1e-12 * (1.0 + np.abs(rhs).max()):
                break
            xb = xb + self.B.ftran(resid)
        self.x[self.basis] = xb

    def infeasibility(self):
        """Cost vector and relaxed basic bounds for a sum-of-infeasibilities pass.

        Returns ``None`` when every basic variable is within ``primal_tol``.
        """
        xb = self.x[self.basis]
        lo = self.lo[self.basis]
        hi = self.hi[self.basis]
        below = xb < lo - self.primal_tol
        above = xb > hi + self.primal_tol
        if not (below.any() or above.any()):
            return None
        cost = np.zeros(len(self.x))
        cost[self.basis[below]] = -1.0
        cost[self.basis[above]] = 1.0
        # an infeasible basic may move freely away from feasibility but
        # blocks at the bound it is approaching
        lob = np.where(below, -math.inf, np.where(above, hi, lo))
        hib = np.where(below, lo, np.where(above, math.inf, hi))
        return cost, lob, hib

    def run(self, cost, phase, restore=False):
        """Pivot to optimality; ``restore`` minimizes basic bound violations instead."""
        m = self.m
        degenerate = 0
        bland = False
        since_refactor = 0
        while True:
            if since_refactor >= REFACTOR_EVERY:
                self.recompute()
                since_refactor = 0
            if self.iterations >= self.budget:
                raise SolverError(f"iteration limit {self.budget} reached in phase {phase}")
            if restore:
                pending = self.infeasibility()
                if pending is None:
                    return LpStatus.OPTIMAL
                cost, lob_eff, hib_eff = pending
            y = self.B.btran(cost[self.basis])
            d = cost - self.KT @ y
            st = self.state
            up = ((st == _AT_LO) | (st == _FREE)) & (d < -self.dual_tol)
            down = ((st == _AT_HI) | (st == _FREE)) & (d > self.dual_tol)
            eligible = up | down
            if not eligible.any():
                return LpStatus.INFEASIBLE if restore else LpStatus.OPTIMAL
            if bland:
                q = int(np.flatnonzero(eligible)[0])
            else:
                score = np.where(eligible, np.abs(d), -1.0)
                q = int(np.argmax(score))
            direction = 1.0 if up[q] else -1.0

            w = self.B.ftran(_column(self.K, q, m))
            delta = -direction * w  # d x_B / d theta
            xb = self.x[self.basis]
            if restore:
                lob, hib = lob_eff, hib_eff
            else:
                lob = self.lo[self.basis]
                hib = self.hi[self.basis]

            flip = self.hi[q] - self.lo[q]
            r, theta, to_hi = self._ratio(delta, xb, lob, hib, bland)
            if flip <= theta:
                theta = flip
                r = -1
            if not math.isfinite(theta):
                if phase == 1 or restore:
                    raise SolverError("unbounded ray in phase 1")
                return LpStatus.UNBOUNDED

            self.iterations += 1
            if bland:
                self.bland_pivots += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate > 10 * m:
                    bland = True
            else:
                degenerate = 0
                bland = False

            self.x[self.basis] = xb + theta * delta
            self.x[q] += direction * theta
            if r < 0:
                self.state[q] = _AT_HI if direction > 0 else _AT_LO
                self.x[q] = self.hi[q] if direction > 0 else self.lo[q]
                continue
            leaving = self.basis[r]
            target = hib[r] if to_hi else lob[r]
            if self.lo[leaving] == self.hi[leaving]:
                self.state[leaving] = _FIXED
                self.x[leaving] = self.lo[leaving]
            elif target == self.hi[leaving]:
                self.state[leaving] = _AT_HI
                self.x[leaving] = self.hi[leaving]
            else:
                self.state[leaving] = _AT_LO
                self.x[leaving] = self.lo[leaving]
            self.basis[r] = q
            self.state[q] = _BASIC
            self.B.push(r, w)
            since_refactor += 1

    def _ratio(self, delta, xb, lob, hib, bland):
        # entries this small next to the largest are rounding noise; any drift
        # they cause is removed by the restoration pass in solve_lp
        tol = max(self.piv_tol, 1e-10 * float(np.abs(delta).max()))
        dec = delta < -tol
        inc = delta > tol
        with np.errstate(divide="ignore", invalid="ignore"):
            lim_dec = np.where(dec & np.isfinite(lob), (xb - lob) / -delta, math.inf)
            lim_inc = np.where(inc & np.isfinite(hib), (hib - xb) / delta, math.inf)
        lim = np.minimum(lim_dec, lim_inc)
        lim = np.maximum(lim, 0.0)
        if not np.isfinite(lim).any():
            return -1, math.inf, False
        if bland:
            theta = float(lim.min())
            ties = np.flatnonzero(lim <= theta + 1e-12)
            big = np.abs(delta[ties])
            ties = ties[big >= 1e-3 * big.max()]
            r = int(min(ties, key=lambda i: self.basis[i]))
        else:
            # Harris pass 1: step allowed with bounds relaxed by primal_tol
            ptol = self.primal_tol
            with np.errstate(divide="ignore", invalid="ignore"):
                rel_dec = np.where(dec & np.isfinite(lob), (xb - lob + ptol) / -delta, math.inf)
                rel_inc = np.where(inc & np.isfinite(hib), (hib - xb + ptol) / delta, math.inf)
            theta_max = max(float(np.minimum(rel_dec, rel_inc).min()), 0.0)
            cand = np.flatnonzero(lim <= theta_max)
            if len(cand) == 0:
                cand = np.array([int(np.argmin(lim))])
            r = int(cand[np.argmax(np.abs(delta[cand]))])
            theta = float(lim[r])
        to_hi = bool(lim_inc[r] <= lim_dec[r])
        return r, theta, to_hi
