"""Independent reference implementations used only by the tests.

None of these share code with the package's solver or rate model; they
trade speed for obviousness.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.optimize import linprog

from mpcqkd import relaysim


# -- LP by vertex enumeration -------------------------------------------------

def vertex_lp(c, A, senses, rhs, lb, ub, maximize=True, tol=1e-9):
    """Optimum of a pointed, bounded LP by checking every basic point.

    Returns ``(status, objective)`` with status "optimal" or "infeasible".
    Equality rows are active at every vertex; the remaining ``n - n_eq``
    active constraints are drawn from inequality rows and finite bounds.
    """
    A = np.asarray(A, float)
    n = A.shape[1]
    G, h, E, e = [], [], [], []
    for a, s, b in zip(A, senses, rhs):
        if s == "<=":
            G.append(a), h.append(b)
        elif s == ">=":
            G.append(-a), h.append(-b)
        else:
            E.append(a), e.append(b)
    eye = np.eye(n)
    for j in range(n):
        if math.isfinite(lb[j]):
            G.append(-eye[j]), h.append(-lb[j])
        if math.isfinite(ub[j]):
            G.append(eye[j]), h.append(ub[j])
    G, h = np.array(G).reshape(-1, n), np.array(h)
    E, e = _independent_rows(np.array(E).reshape(-1, n), np.array(e))
    if E is None:
        return "infeasible", math.nan
    k = n - len(E)
    if k < 0:
        return _overdetermined(E, e, G, h, c, maximize, tol)
    best = None
    sign = 1.0 if maximize else -1.0
    combos = np.array(list(itertools.combinations(range(len(G)), k)), dtype=int)
    combos = combos.reshape(len(combos), k)
    for chunk in np.array_split(combos, max(1, len(combos) // 20000)):
        M = np.concatenate([np.broadcast_to(E, (len(chunk),) + E.shape), G[chunk]], axis=1)
        r = np.concatenate([np.broadcast_to(e, (len(chunk), len(e))), h[chunk]], axis=1)
        ok = np.abs(np.linalg.det(M)) > 1e-12
        if not ok.any():
            continue
        x = np.linalg.solve(M[ok], r[ok][..., None])[..., 0]
        feas = np.all(x @ G.T <= h + tol * (1 + np.abs(h)), axis=1)
        if len(E):
            feas &= np.all(np.abs(x @ E.T - e) <= tol * (1 + np.abs(e)), axis=1)
        if feas.any():
            val = (sign * (x[feas] @ c)).max()
            best = val if best is None else max(best, val)
    if best is None:
        return "infeasible", math.nan
    return "optimal", sign * best


def _independent_rows(E, e):
    """Drop equality rows that are combinations of earlier ones; None if inconsistent."""
    keep = []
    for i in range(len(E)):
        if np.linalg.matrix_rank(E[keep + [i]], tol=1e-10) > len(keep):
            keep.append(i)
    if len(E):
        x, *_ = np.linalg.lstsq(E, e, rcond=None)
        if np.abs(E @ x - e).max() > 1e-8:
            return None, None
    return E[keep], e[keep]


def _overdetermined(E, e, G, h, c, maximize, tol):
    x, *_ = np.linalg.lstsq(E, e, rcond=None)
    if np.abs(E @ x - e).max() > 1e-8 or np.any(G @ x > h + tol):
        return "infeasible", math.nan
    return "optimal", float(c @ x)


# -- MILP by exhaustive enumeration -------------------------------------------

def enumerate_milp(prog, tol=1e-7):
    """Best objective over every integer assignment, each completed by an LP.

    Integer-only rows are checked on the whole assignment grid first; the
    survivors get a continuous LP solved by HiGHS.  Returns
    ``(objective, n_lps)``; objective is ``-inf`` when nothing is feasible.
    """
    ints = np.flatnonzero(prog.integer_mask)
    cont = np.flatnonzero(~prog.integer_mask)
    ranges = [np.arange(int(prog.lb[j]), int(prog.ub[j]) + 1) for j in ints]
    grid = np.array(list(itertools.product(*ranges)), dtype=float).reshape(-1, len(ints))
    A = prog.A.toarray()
    senses = np.array(prog.senses)
    int_rows = [i for i in range(A.shape[0]) if not np.any(A[i, cont])]
    keep = np.ones(len(grid), bool)
    for i in int_rows:
        lhs = grid @ A[i, ints]
        b = prog.rhs[i]
        if senses[i] == "<=":
            keep &= lhs <= b + tol
        elif senses[i] == ">=":
            keep &= lhs >= b - tol
        else:
            keep &= np.abs(lhs - b) <= tol
    grid = grid[keep]
    rows = [i for i in range(A.shape[0]) if i not in set(int_rows)]
    Ac = A[np.ix_(rows, cont)]
    Ai = A[np.ix_(rows, ints)]
    s = senses[rows]
    b = prog.rhs[rows]
    le, ge, eq = s == "<=", s == ">=", s == "="
    bounds = list(zip(prog.lb[cont], [None if not math.isfinite(u) else u for u in prog.ub[cont]]))
    best = -math.inf
    for z in grid:
        shift = b - Ai @ z
        res = linprog(-prog.objective[cont],
                      A_ub=np.vstack([Ac[le], -Ac[ge]]) if (le | ge).any() else None,
                      b_ub=np.concatenate([shift[le], -shift[ge]]) if (le | ge).any() else None,
                      A_eq=Ac[eq] if eq.any() else None, b_eq=shift[eq] if eq.any() else None,
                      bounds=bounds, method="highs")
        if res.status == 0:
            best = max(best, float(-res.fun + prog.objective[ints] @ z))
    return best, len(grid)


# -- decoy BB84 (asymptotic GLLP) ---------------------------------------------

def gllp_kbps(length_km, alpha, eta_det, y0, e_d, f_ec, f_src, mu, q):
    """Decoy-state BB84 secret key rate written out term by term."""
    eta = eta_det * 10 ** (-alpha * length_km / 10)
    h2 = lambda p: 0.0 if p <= 0 or p >= 1 else -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    gain_mu = y0 + 1 - np.exp(-eta * mu)
    qber_mu = (0.5 * y0 + e_d * (1 - np.exp(-eta * mu))) / gain_mu
    yield_1 = 1 - (1 - y0) * (1 - eta)
    gain_1 = yield_1 * mu * np.exp(-mu)
    qber_1 = (0.5 * y0 + e_d * eta) / yield_1
    r = q * (gain_1 * (1 - h2(qber_1)) - f_ec * gain_mu * h2(qber_mu))
    return max(r, 0.0) * f_src / 1e3


# -- strongly trusted relays on a chain ---------------------------------------

def chain_strong_relays(n, mode, seed=0, text=b"chain relay probe message 0123456789"):
    """Count interior chain nodes that end up holding the plaintext.

    ``mode="bb84"``: every hop is an OTP link, so each interior node
    decrypts.  ``mode="mpc"``: the chain is tiled with A-C-B cells from
    node 0; cell ends decrypt, cell middles only forward; a leftover single
    hop is a plain OTP link.
    """
    exposed = set()
    rng_seed = seed
    if mode == "bb84":
        for mid in range(1, n - 1):
            pools = relaysim.establish_pools(rng_seed, 4096)
            rng_seed += 1
            trace = relaysim.bb84_baseline_send(text, pools)
            if relaysim.audit_exposure(trace, pools).relay_c.saw_plaintext:
                exposed.add(mid)
        return len(exposed)
    start = 0
    while start + 2 <= n - 1:
        pools = relaysim.establish_pools(rng_seed, 4096)
        rng_seed += 1
        trace = relaysim.mpc_send(text, pools)
        if relaysim.audit_exposure(trace, pools).relay_c.saw_plaintext:
            exposed.add(start + 1)
        end = start + 2
        if end != n - 1 and trace.recovered == text:
            exposed.add(end)
        start = end
    return len(exposed)


def random_lp(rng):
    """Small LP with x >= 0 and a bounding row, so vertex enumeration is exact.

    Mostly feasible by construction (rows are built around a random point);
    about one in six draws uses unrelated right-hand sides and may be
    infeasible.
    """
    n = int(rng.integers(1, 9))
    m = int(rng.integers(1, 9))
    A = rng.normal(size=(m, n)) * (rng.random((m, n)) < 0.7)
    A[-1] = 1.0
    senses = list(rng.choice(["<=", ">=", "="], size=m, p=[0.6, 0.25, 0.15]))
    senses[-1] = "<="
    x0 = rng.uniform(0, 2, n)
    rhs = A @ x0 + np.where(np.array(senses) == "<=", rng.uniform(0, 1, m),
                            np.where(np.array(senses) == ">=", -rng.uniform(0, 1, m), 0.0))
    if rng.random() < 1 / 6:
        rhs = rng.normal(size=m) * 2
    rhs[-1] = abs(rhs[-1]) + 4 * n
    lb = np.zeros(n)
    ub = np.where(rng.random(n) < 0.3, rng.uniform(0.5, 3, n), np.inf)
    c = rng.normal(size=n)
    return c, A, senses, rhs, lb, ub
