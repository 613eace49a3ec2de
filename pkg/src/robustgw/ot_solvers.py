"""Optimal-transport primitives over a fixed cost matrix.

Sinkhorn scaling (plain and log-domain), an exact transportation-simplex
solver for desk-scale instances, and the robust variants built on them:
Tukey-penalized transport, truncated-cost transport, the Huber-ball
robust Wasserstein distance, and the truncated Levy-Prokhorov metric.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError
from .mmspace import cross_distances, penalty_eval, RobustPenalty

__all__ = [
    "SinkhornConfig",
    "SinkhornResult",
    "CouplingMatrix",
    "sinkhorn",
    "scale_kernel",
    "exact_ot",
    "wasserstein_p",
    "tukey_wasserstein",
    "truncated_w1",
    "robot_distance",
    "robust_w_eps",
    "robust_w_eps_dual",
    "levy_prokhorov_trunc",
]

EXACT_CELL_LIMIT = 10_000


@dataclass(frozen=True)
class SinkhornConfig:
    """Entropic-regularization settings for Sinkhorn scaling.

    epsilon : regularization strength (> 0)
    max_iter : maximum number of full row/column sweeps
    tol : stop once the L1 marginal violation drops below this
    """

    epsilon: float
    max_iter: int = 1000
    tol: float = 1e-9

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class CouplingMatrix:
    """A transport plan with its prescribed marginals.

    In balanced mode row/column sums must match the marginals; in partial
    mode they may fall below them (the marginals act as capacities).
    """

    plan: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def marginal_violation(self):
        r = np.abs(self.plan.sum(axis=1) - self.row_marginal).sum()
        c = np.abs(self.plan.sum(axis=0) - self.col_marginal).sum()
        return float(r + c)

    def validate(self, mode="balanced", tol=1e-6):
        if self.plan.min() < -1e-12:
            raise ValueError("coupling has negative entries")
        if mode == "balanced":
            if self.marginal_violation() > tol:
                raise ValueError("coupling marginals violated beyond tolerance")
            if abs(self.plan.sum() - 1.0) > tol:
                raise ValueError("total mass differs from 1")
        else:
            if np.any(self.plan.sum(axis=1) > self.row_marginal + tol) or \
                    np.any(self.plan.sum(axis=0) > self.col_marginal + tol):
                raise ValueError("partial coupling exceeds its marginal bounds")
        return self


@dataclass(frozen=True)
class SinkhornResult:
    coupling: CouplingMatrix
    a: np.ndarray
    b: np.ndarray
    iterations: int
    violation: float
    violation_trace: tuple


def scale_kernel(kernel, mu, nu, max_iter, tol, log_kernel=None):
    """Diagonal-scale a positive kernel to the marginals (mu, nu).

    Runs plain Sinkhorn sweeps on ``kernel``; if a row or column of the
    kernel underflows to zero the log-domain variant is used instead
    (``log_kernel`` is taken when supplied, otherwise ``log(kernel)``).

    Returns ``(plan, log_a, log_b, iterations, violation, trace)`` where
    ``log_a``/``log_b`` are the log scalings such that
    ``plan = exp(log_a)[:, None] * kernel * exp(log_b)[None, :]``.
    """
    k = kernel
    if np.all(k.sum(axis=1) > 0.0) and np.all(k.sum(axis=0) > 0.0):
        a = np.ones_like(mu)
        b = np.ones_like(nu)
        trace = []
        it = 0
        broke = False
        for it in range(1, max_iter + 1):
            kb = k @ b
            if np.any(kb == 0.0):
                broke = True
                break
            a = mu / kb
            ka = k.T @ a
            if np.any(ka == 0.0):
                broke = True
                break
            b = nu / ka
            viol = float(np.abs(a * (k @ b) - mu).sum())
            trace.append(viol)
            if viol <= tol:
                break
        if not broke:
            plan = (a[:, None] * k) * b[None, :]
            viol = float(np.abs(plan.sum(axis=1) - mu).sum()
                         + np.abs(plan.sum(axis=0) - nu).sum())
            return plan, np.log(a), np.log(b), it, viol, trace
    # log-domain fallback
    logk = log_kernel
    if logk is None:
        with np.errstate(divide="ignore"):
            logk = np.log(kernel)
    return _scale_kernel_log(logk, mu, nu, max_iter, tol)


def _logsumexp(arr, axis):
    mx = np.max(arr, axis=axis, keepdims=True)
    mx_safe = np.where(np.isfinite(mx), mx, 0.0)
    out = np.log(np.sum(np.exp(arr - mx_safe), axis=axis)) + np.squeeze(mx_safe, axis=axis)
    return np.where(np.isfinite(np.squeeze(mx, axis=axis)), out, -np.inf)


def _scale_kernel_log(logk, mu, nu, max_iter, tol):
    if np.any(np.all(np.isinf(logk) & (logk < 0), axis=1)) or \
            np.any(np.all(np.isinf(logk) & (logk < 0), axis=0)):
        raise NumericalError(
            "kernel underflow: a full row or column vanished; "
            "increase epsilon or rescale the cost matrix")
    logmu = np.log(mu)
    lognu = np.log(nu)
    f = np.zeros_like(mu)
    g = np.zeros_like(nu)
    trace = []
    it = 0
    for it in range(1, max_iter + 1):
        f = logmu - _logsumexp(logk + g[None, :], axis=1)
        g = lognu - _logsumexp(logk + f[:, None], axis=0)
        logplan = logk + f[:, None] + g[None, :]
        rows = np.exp(_logsumexp(logplan, axis=1))
        viol = float(np.abs(rows - mu).sum())
        trace.append(viol)
        if viol <= tol:
            break
    logplan = logk + f[:, None] + g[None, :]
    plan = np.exp(logplan)
    if not np.all(np.isfinite(plan)):
        raise NumericalError("non-finite transport plan in log-domain scaling")
    viol = float(np.abs(plan.sum(axis=1) - mu).sum()
                 + np.abs(plan.sum(axis=0) - nu).sum())
    return plan, f, g, it, viol, trace


def round_to_marginals(plan, mu, nu):
    """Project a nonnegative plan onto the coupling polytope.

    Scales rows and columns down where they exceed the marginals, then
    spreads the missing mass as a rank-one correction.  The output has
    exact marginals and differs from the input by at most twice its
    marginal violation in L1.
    """
    rows = plan.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        x = np.where(rows > 0, np.minimum(mu / rows, 1.0), 1.0)
    p = plan * x[:, None]
    cols = p.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(cols > 0, np.minimum(nu / cols, 1.0), 1.0)
    p = p * y[None, :]
    err_r = mu - p.sum(axis=1)
    err_c = nu - p.sum(axis=0)
    total = err_r.sum()
    if total > 0:
        p = p + np.outer(np.maximum(err_r, 0.0),
                         np.maximum(err_c, 0.0)) / total
    return p


def sinkhorn(cost, mu, nu, cfg, warm_start=None):
    """Entropically regularized transport by Sinkhorn scaling.

    Parameters
    ----------
    cost : ndarray, shape (m, n)
        Finite cost matrix.
    mu, nu : ndarray
        Strictly positive probability vectors (drop zero atoms first).
    cfg : SinkhornConfig
    warm_start : (a, b) pair of positive scalings, optional

    Returns
    -------
    SinkhornResult
        Plan with L1 marginal violation <= cfg.tol, or the state at
        cfg.max_iter with the violation reported.

    Notes
    -----
    Scaling runs in the log domain when ``epsilon`` is small relative to
    the median cost, which prevents kernel underflow on costs with a
    large dynamic range.
    """
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if np.any(mu <= 0) or np.any(nu <= 0):
        raise ValueError("marginals must be strictly positive; drop zero atoms")
    with np.errstate(over="ignore"):
        logk = -cost / cfg.epsilon
    logk = np.where(np.isnan(logk), -np.inf, logk)
    log_mode = cfg.epsilon < 0.05 * float(np.median(cost))
    if log_mode:
        plan, la, lb, it, viol, trace = _scale_kernel_log(
            logk, mu, nu, cfg.max_iter, cfg.tol)
    else:
        shift = logk.max()
        kernel = np.exp(logk - shift)
        if warm_start is not None:
            a0, b0 = warm_start
            kernel = kernel * np.outer(a0, b0)
            logk = logk + np.log(a0)[:, None] + np.log(b0)[None, :]
        plan, la, lb, it, viol, trace = scale_kernel(
            kernel, mu, nu, cfg.max_iter, cfg.tol, log_kernel=logk - shift)
    coupling = CouplingMatrix(plan=plan, row_marginal=mu, col_marginal=nu)
    # scalings may overflow to inf for extreme potentials; the plan is finite
    with np.errstate(over="ignore"):
        a, b = np.exp(la), np.exp(lb)
    return SinkhornResult(coupling=coupling, a=a, b=b, iterations=it,
                          violation=viol, violation_trace=tuple(trace))


# ---------------------------------------------------------------------------
# Exact solver: transportation simplex


def _northwest_corner(a, b):
    m, n = len(a), len(b)
    ra = a.copy()
    rb = b.copy()
    basis = []
    alloc = []
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        basis.append((i, j))
        alloc.append(q)
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        # advance one index only, so the basis keeps m + n - 1 cells
        if ra[i] <= rb[j] and i < m - 1:
            i += 1
        else:
            j += 1
    return basis, alloc


def _tree_solve(basis, a, b):
    """Exact allocations for a spanning-tree basis by leaf elimination.

    Returns None when the basis is infeasible (a negative allocation).
    """
    m, n = len(a), len(b)
    deg = np.zeros(m + n, dtype=int)
    adj = [[] for _ in range(m + n)]
    for idx, (i, j) in enumerate(basis):
        u, v = i, m + j
        adj[u].append((v, idx))
        adj[v].append((u, idx))
        deg[u] += 1
        deg[v] += 1
    need = np.concatenate([a, b]).astype(float)
    alloc = np.zeros(len(basis))
    used = np.zeros(len(basis), dtype=bool)
    stack = [u for u in range(m + n) if deg[u] == 1]
    removed = np.zeros(m + n, dtype=bool)
    while stack:
        u = stack.pop()
        if removed[u]:
            continue
        edge = next(((v, idx) for v, idx in adj[u] if not used[idx]), None)
        if edge is None:
            removed[u] = True
            continue
        v, idx = edge
        alloc[idx] = need[u]
        if alloc[idx] < -1e-9 * (1.0 + np.max(np.abs(need))):
            return None
        used[idx] = True
        need[v] -= need[u]
        need[u] = 0.0
        removed[u] = True
        deg[v] -= 1
        if deg[v] == 1:
            stack.append(v)
    return np.maximum(alloc, 0.0)


def _potentials(basis, cost, m, n):
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    adj_r = [[] for _ in range(m)]
    adj_c = [[] for _ in range(n)]
    for (i, j) in basis:
        adj_r[i].append(j)
        adj_c[j].append(i)
    u[0] = 0.0
    stack = [("r", 0)]
    while stack:
        side, k = stack.pop()
        if side == "r":
            for j in adj_r[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    stack.append(("c", j))
        else:
            for i in adj_c[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    stack.append(("r", i))
    return u, v


def _find_cycle(basis, enter, m, n):
    # unique path from enter's row node to its column node in the basis tree
    adj = {}
    for idx, (i, j) in enumerate(basis):
        adj.setdefault(("r", i), []).append((("c", j), idx))
        adj.setdefault(("c", j), []).append((("r", i), idx))
    start = ("r", enter[0])
    goal = ("c", enter[1])
    prev = {start: (None, None)}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nxt, idx in adj.get(node, []):
            if nxt not in prev:
                prev[nxt] = (node, idx)
                stack.append(nxt)
    path_edges = []
    node = goal
    while node != start:
        pnode, idx = prev[node]
        path_edges.append(idx)
        node = pnode
    return path_edges[::-1]


def _transportation_simplex(cost, a, b, max_pivots=200_000):
    m, n = cost.shape
    basis, alloc = _northwest_corner(a, b)
    alloc = np.array(alloc, dtype=float)
    scale = float(np.max(np.abs(cost))) or 1.0
    tol_neg = 1e-11 * scale
    bland = False
    degenerate_streak = 0
    for _ in range(max_pivots):
        u, v = _potentials(basis, cost, m, n)
        red = cost - u[:, None] - v[None, :]
        for (i, j) in basis:
            red[i, j] = 0.0
        if bland:
            flat = np.flatnonzero(red.ravel() < -tol_neg)
            if flat.size == 0:
                break
            enter = divmod(int(flat[0]), n)
        else:
            k = int(np.argmin(red))
            if red.ravel()[k] >= -tol_neg:
                break
            enter = divmod(k, n)
        path = _find_cycle(basis, enter, m, n)
        # signs along the cycle: entering cell +, then alternating
        minus_idx = path[0::2]
        theta = np.inf
        leave_pos = None
        leave_cell = None
        for idx in minus_idx:
            cell = basis[idx]
            q = alloc[idx]
            if q < theta - 1e-15 or (abs(q - theta) <= 1e-15 and
                                     (leave_cell is None or cell < leave_cell)):
                theta = q
                leave_pos = idx
                leave_cell = cell
        for r, idx in enumerate(path):
            alloc[idx] += -theta if r % 2 == 0 else theta
        basis[leave_pos] = enter
        alloc[leave_pos] = theta
        if theta <= 1e-15:
            degenerate_streak += 1
            if degenerate_streak >= m + n:
                bland = True  # Bland's rule guarantees no cycling
        else:
            degenerate_streak = 0
            bland = False
    else:
        raise NumericalError("transportation simplex exceeded its pivot budget")
    exact = _tree_solve(basis, a, b)
    if exact is not None:
        alloc = exact
    plan = np.zeros((m, n))
    for (i, j), q in zip(basis, alloc):
        plan[i, j] += q
    return plan


def exact_ot(cost, mu, nu, max_cells=EXACT_CELL_LIMIT):
    """Exact optimal transport by the transportation simplex.

    Dense north-west-corner start; Dantzig pricing with a switch to
    Bland's rule under degeneracy for anti-cycling.  Intended for
    desk-scale instances (``m * n <= max_cells``).

    Parameters
    ----------
    cost : ndarray, shape (m, n)
    mu, nu : ndarray
        Nonnegative marginals with equal total mass.  Zero-weight atoms
        are dropped and reinserted as zero rows/columns of the plan.

    Returns
    -------
    (CouplingMatrix, float)
        An optimal vertex plan and its cost.
    """
    cost = np.asarray(cost, dtype=float)
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    m, n = cost.shape
    if m * n > max_cells:
        raise ValueError(f"instance has {m * n} cells, limit is {max_cells}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    if np.any(mu < 0) or np.any(nu < 0):
        raise ValueError("marginals must be nonnegative")
    if abs(mu.sum() - nu.sum()) > 1e-9 * max(mu.sum(), 1.0):
        raise ValueError("marginals must have equal mass")
    ri = np.flatnonzero(mu > 0)
    cj = np.flatnonzero(nu > 0)
    a = mu[ri]
    b = nu[cj] * (a.sum() / nu[cj].sum())
    sub = _transportation_simplex(cost[np.ix_(ri, cj)], a, b)
    plan = np.zeros((m, n))
    plan[np.ix_(ri, cj)] = sub
    value = float(np.sum(plan * cost))
    return CouplingMatrix(plan=plan, row_marginal=mu, col_marginal=nu), value


# ---------------------------------------------------------------------------
# Robust transport variants


def _drop_zero_atoms(x_space, y_space, cost):
    mu, nu = x_space.weights, y_space.weights
    ri = np.flatnonzero(mu > 0)
    cj = np.flatnonzero(nu > 0)
    return cost[np.ix_(ri, cj)], mu[ri] / mu[ri].sum(), nu[cj] / nu[cj].sum()


def _ot_value(cost, mu, nu, exact=True, cfg=None):
    if exact:
        _, value = exact_ot(cost, mu, nu)
        return value
    if cfg is None:
        cfg = SinkhornConfig(epsilon=0.05 * max(float(np.median(cost)), 1e-12))
    res = sinkhorn(cost, mu, nu, cfg)
    return float(np.sum(res.coupling.plan * cost))


def wasserstein_p(x_space, y_space, p=2.0, exact=True, cfg=None):
    """p-Wasserstein distance between two spaces sharing an ambient space."""
    d = cross_distances(x_space, y_space)
    cost, mu, nu = _drop_zero_atoms(x_space, y_space, d ** p)
    return _ot_value(cost, mu, nu, exact, cfg) ** (1.0 / p)


def tukey_wasserstein(x_space, y_space, p=2.0, tau=np.inf, exact=True, cfg=None):
    """Transport distance under the Tukey-penalized ground cost.

    Solves ``inf_pi (int min(d(x, y)^p, tau^p) dpi)^(1/p)`` over couplings
    of the two weight vectors, with cross-distances taken in the shared
    ambient space.
    """
    d = cross_distances(x_space, y_space)
    pen = RobustPenalty.tukey(p=p, tau=tau)
    cost, mu, nu = _drop_zero_atoms(x_space, y_space, penalty_eval(pen, d))
    return _ot_value(cost, mu, nu, exact, cfg) ** (1.0 / p)


def truncated_w1(x_space, y_space, level, exact=True, cfg=None):
    """Transport cost under the truncated ground cost ``min(d, level)``."""
    d = cross_distances(x_space, y_space)
    cost, mu, nu = _drop_zero_atoms(x_space, y_space, np.minimum(d, level))
    return _ot_value(cost, mu, nu, exact, cfg)


def robot_distance(x_space, y_space, lam, exact=True, cfg=None):
    """Truncated-cost transport at level ``2 * lam``.

    Equals the plain 1-Wasserstein distance once ``2 * lam`` exceeds the
    largest cross-distance, and 0 at ``lam = 0``.
    """
    return truncated_w1(x_space, y_space, 2.0 * lam, exact, cfg)


def _robust_lp_parts(x_space, y_space, p, eps, eps2):
    if not (0.0 <= eps < 1.0):
        raise ValueError("eps must lie in [0, 1)")
    eps2 = eps if eps2 is None else eps2
    if not (0.0 <= eps2 < 1.0):
        raise ValueError("eps2 must lie in [0, 1)")
    d = cross_distances(x_space, y_space)
    cost, mu, nu = _drop_zero_atoms(x_space, y_space, d ** p)
    return cost, mu / (1.0 - eps), nu / (1.0 - eps2)


def robust_w_eps(x_space, y_space, p=1.0, eps=0.0, eps2=None, dual_check=False):
    """Robust Wasserstein distance with mass deletion on both sides.

    Computes the smallest ``W_p`` over probability measures obtained by
    deleting an ``eps`` (resp. ``eps2``) fraction of mass from each side
    and renormalizing.  The equivalent linear program

        minimize    sum c_ij pi_ij         (c = d^p)
        subject to  pi >= 0,
                    row sums   <= mu_i / (1 - eps),
                    column sums <= nu_j / (1 - eps2),
                    total mass  = 1

    is reduced to a balanced problem by adding one zero-cost slack row
    and column absorbing the inflated surplus, so the transportation
    simplex applies unchanged.  Returns ``value ** (1/p)``.

    With ``dual_check=True`` the value is verified against the LP dual
    (solved independently); a mismatch beyond 1e-6 raises
    :class:`NumericalError`.
    """
    cost, mu_hat, nu_hat = _robust_lp_parts(x_space, y_space, p, eps, eps2)
    m, n = cost.shape
    if m * n > EXACT_CELL_LIMIT:
        raise ValueError(f"instance has {m * n} cells, limit is {EXACT_CELL_LIMIT}")
    s_col = mu_hat.sum() - 1.0
    s_row = nu_hat.sum() - 1.0
    aug = np.zeros((m + 1, n + 1))
    aug[:m, :n] = cost
    supplies = np.concatenate([mu_hat, [s_row]])
    demands = np.concatenate([nu_hat, [s_col]])
    _, raw = exact_ot(aug, supplies, demands, max_cells=(m + 1) * (n + 1))
    if dual_check:
        dual = robust_w_eps_dual(x_space, y_space, p=p, eps=eps, eps2=eps2)
        if abs(raw - dual) > 1e-6:
            raise NumericalError(
                f"robust transport primal/dual mismatch: {raw!r} vs {dual!r}")
    return max(raw, 0.0) ** (1.0 / p)


def robust_w_eps_dual(x_space, y_space, p=1.0, eps=0.0, eps2=None):
    """LP-dual value of the Huber-ball robust transport program.

    maximize  <mu_hat, u> + <nu_hat, w> + t
    s.t.      u_i + w_j + t <= c_ij,   u <= 0,  w <= 0.

    Solved with scipy's HiGHS backend as an independent route; returns
    the raw (un-rooted) optimal value.
    """
    from scipy.optimize import linprog

    cost, mu_hat, nu_hat = _robust_lp_parts(x_space, y_space, p, eps, eps2)
    m, n = cost.shape
    # variables [u (m), w (n), t]; maximize -> minimize the negation
    c_obj = -np.concatenate([mu_hat, nu_hat, [1.0]])
    rows = np.repeat(np.arange(m), n)
    cols = np.tile(np.arange(n), m)
    a_ub = np.zeros((m * n, m + n + 1))
    a_ub[np.arange(m * n), rows] = 1.0
    a_ub[np.arange(m * n), m + cols] = 1.0
    a_ub[:, -1] = 1.0
    b_ub = cost.ravel()
    bounds = [(None, 0.0)] * (m + n) + [(None, None)]
    res = linprog(c_obj, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise NumericalError(f"dual LP failed: {res.message}")
    return float(-res.fun)


def levy_prokhorov_trunc(x_space, y_space, lam, tol=None):
    """Truncated Levy-Prokhorov distance by bisection over epsilon.

    A level ``e`` is feasible when some coupling puts at most ``e`` mass
    on pairs with ``min(d(x, y), lam) > e``; feasibility at ``e`` is
    decided exactly by a 0/1-cost transport problem.  The infimum over
    feasible levels is bracketed in ``[0, lam]`` to within ``tol``
    (default ``1e-4 * lam``).
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if lam == 0:
        return 0.0
    tol = 1e-4 * lam if tol is None else tol
    d = cross_distances(x_space, y_space)
    dl = np.minimum(d, lam)
    _, mu, nu = _drop_zero_atoms(x_space, y_space, d)
    dl = dl[np.ix_(np.flatnonzero(x_space.weights > 0),
                   np.flatnonzero(y_space.weights > 0))]

    def feasible(e):
        mask = (dl > e).astype(float)
        _, val = exact_ot(mask, mu, nu)
        return val <= e + 1e-12

    lo, hi = 0.0, float(lam)
    if feasible(lo):
        return 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def coupling_to_csv(coupling, path):
    """Write a dense plan as CSV."""
    np.savetxt(path, coupling.plan, delimiter=",")
