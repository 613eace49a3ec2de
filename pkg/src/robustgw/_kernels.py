"""Dense O(m^2 n^2) distortion contractions.

The generic robust penalties admit no exact low-rank factorization, so the
local-cost matrix C(pi)_{ij} = sum_{a,b} penalty(CX[i,a] - CY[j,b]) pi[a,b]
is computed by brute force.  Numba kernels parallelize over the i index;
each output cell accumulates in a fixed order, so results are identical
for any thread count.  A chunked numpy fallback covers environments
without a working numba.
"""

import numpy as np

try:
    from numba import njit, prange

    NUMBA_OK = True
except Exception:  # pragma: no cover - exercised only without numba
    NUMBA_OK = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

    prange = range


_OPTS = dict(parallel=True, fastmath=True, cache=True)


@njit(**_OPTS)
def _lc_squared_p2(cx, cy, plan, out):
    m, n = out.shape
    for i in prange(m):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    d = x - cy[j, b]
                    acc += d * d * plan[a, b]
            out[i, j] = acc


@njit(**_OPTS)
def _lc_squared_gen(cx, cy, plan, p, out):
    m, n = out.shape
    for i in prange(m):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    d = abs(x - cy[j, b])
                    acc += d ** p * plan[a, b]
            out[i, j] = acc


@njit(**_OPTS)
def _lc_tukey_p2(cx, cy, plan, tau2, out):
    m, n = out.shape
    for i in prange(m):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    d = x - cy[j, b]
                    s = d * d
                    if s > tau2:
                        s = tau2
                    acc += s * plan[a, b]
            out[i, j] = acc


@njit(**_OPTS)
def _lc_tukey_gen(cx, cy, plan, p, taup, out):
    m, n = out.shape
    for i in prange(m):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    s = abs(x - cy[j, b]) ** p
                    if s > taup:
                        s = taup
                    acc += s * plan[a, b]
            out[i, j] = acc


@njit(**_OPTS)
def _lc_huber(cx, cy, plan, tau, out):
    # branchless factored form min(d, tau) * (d + max(d - tau, 0)) / (2 tau)
    # vectorizes and avoids the cancellation of d^2 - (d - tau)^2
    m, n = out.shape
    inv2t = 0.5 / tau
    for i in prange(m):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    d = abs(x - cy[j, b])
                    r = d - tau
                    if r < 0.0:
                        r = 0.0
                    lo = d
                    if lo > tau:
                        lo = tau
                    acc += lo * (d + r) * inv2t * plan[a, b]
            out[i, j] = acc


@njit(**_OPTS)
def _lc_trunc(cx, cy, plan, lam, out):
    m, n = out.shape
    for i in prange(m):
        for j in range(n):
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    d = abs(x - cy[j, b])
                    if d > lam:
                        d = lam
                    acc += d * plan[a, b]
            out[i, j] = acc


@njit(**_OPTS)
def _huber_branch_total(cx, cy, plan, tau, out_rows):
    # Branch-factorized Huber total: within each branch of |a-b| vs tau the
    # loss splits as f1(a) + f2(b) - h1(a) h2(b); the two formulas agree at
    # the boundary |a-b| == tau, so no boundary cells need special casing.
    m = cx.shape[0]
    n = cy.shape[0]
    inv2t = 0.5 / tau
    for i in prange(m):
        acc_i = 0.0
        for j in range(n):
            w_ij = plan[i, j]
            if w_ij == 0.0:
                continue
            acc = 0.0
            for a in range(m):
                x = cx[i, a]
                for b in range(n):
                    y = cy[j, b]
                    if abs(x - y) <= tau:
                        v = x * x * inv2t + y * y * inv2t - (x / tau) * y
                    elif x - y > tau:
                        v = x + (-y) - tau * 0.5
                    else:
                        v = -x + y - tau * 0.5
                    acc += v * plan[a, b]
            acc_i += acc * w_ij
        out_rows[i] = acc_i


def _numpy_local_cost(cx, cy, plan, penalty):
    m, n = cx.shape[0], cy.shape[0]
    out = np.empty((m, n))
    for i in range(m):
        diff = cx[i][:, None, None] - cy[None, :, :]   # (a, j, b)
        out[i] = np.einsum("ajb,ab->j", penalty(diff), plan)
    return out


def local_cost_naive(cx, cy, plan, penalty):
    """Local cost matrix by dense contraction under any penalty."""
    cx = np.ascontiguousarray(cx, dtype=float)
    cy = np.ascontiguousarray(cy, dtype=float)
    plan = np.ascontiguousarray(plan, dtype=float)
    if not NUMBA_OK:
        return _numpy_local_cost(cx, cy, plan, penalty)
    out = np.empty((cx.shape[0], cy.shape[0]))
    kind = penalty.kind
    if kind == "squared":
        if penalty.p == 2.0:
            _lc_squared_p2(cx, cy, plan, out)
        else:
            _lc_squared_gen(cx, cy, plan, penalty.p, out)
    elif kind == "tukey":
        if not np.isfinite(penalty.tau):
            if penalty.p == 2.0:
                _lc_squared_p2(cx, cy, plan, out)
            else:
                _lc_squared_gen(cx, cy, plan, penalty.p, out)
        elif penalty.p == 2.0:
            _lc_tukey_p2(cx, cy, plan, penalty.tau ** 2, out)
        else:
            _lc_tukey_gen(cx, cy, plan, penalty.p, penalty.tau ** penalty.p, out)
    elif kind == "huber":
        _lc_huber(cx, cy, plan, penalty.tau, out)
    elif kind == "truncate":
        _lc_trunc(cx, cy, plan, penalty.lam, out)
    else:  # pragma: no cover
        raise ValueError(f"unknown penalty kind {kind!r}")
    return out


def huber_branch_total(cx, cy, plan, tau):
    """Huber distortion total via the per-branch factorization."""
    cx = np.ascontiguousarray(cx, dtype=float)
    cy = np.ascontiguousarray(cy, dtype=float)
    plan = np.ascontiguousarray(plan, dtype=float)
    if not NUMBA_OK:
        m, n = cx.shape[0], cy.shape[0]
        a = cx[:, :, None, None]
        b = cy[None, None, :, :]
        quad = a * a / (2 * tau) + b * b / (2 * tau) - (a / tau) * b
        hi = a - b - tau / 2
        lo = -a + b - tau / 2
        d = a - b
        val = np.where(np.abs(d) <= tau, quad, np.where(d > tau, hi, lo))
        return float(np.einsum("iajb,ij,ab->", val, plan, plan))
    rows = np.empty(cx.shape[0])
    _huber_branch_total(cx, cy, plan, tau, rows)
    return float(rows.sum())
