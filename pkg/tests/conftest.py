"""Shared helpers: independent oracles kept free of the package kernels."""

import itertools

import numpy as np
import pytest

from robustgw.mmspace import build_space


def naive_distortion_cost(cx, cy, plan, penalty_fn):
    """Quadruple-loop reference for the quartic distortion contraction."""
    m, n = plan.shape
    total = 0.0
    for i in range(m):
        for j in range(n):
            for a in range(m):
                for b in range(n):
                    total += penalty_fn(cx[i, a] - cy[j, b]) * plan[i, j] * plan[a, b]
    return total


def naive_local_cost(cx, cy, plan, penalty_fn):
    """Per-cell reference for the linearized cost matrix."""
    m, n = plan.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for a in range(m):
                for b in range(n):
                    s += penalty_fn(cx[i, a] - cy[j, b]) * plan[a, b]
            out[i, j] = s
    return out


def lp_ot_value(cost, mu, nu):
    """Transport LP solved with scipy (independent of the simplex)."""
    from scipy.optimize import linprog

    m, n = cost.shape
    a_eq = []
    for i in range(m):
        row = np.zeros((m, n))
        row[i] = 1.0
        a_eq.append(row.ravel())
    for j in range(n):
        col = np.zeros((m, n))
        col[:, j] = 1.0
        a_eq.append(col.ravel())
    res = linprog(cost.ravel(), A_eq=np.array(a_eq),
                  b_eq=np.concatenate([mu, nu]), method="highs")
    assert res.success
    return float(res.fun)


def enumerate_bfs_values(cost, mu, nu):
    """Objective values of every feasible transportation-polytope basis."""
    from robustgw.ot_solvers import _tree_solve

    m, n = len(mu), len(nu)
    cells = list(itertools.product(range(m), range(n)))
    values = []
    for basis in itertools.combinations(cells, m + n - 1):
        parent = list(range(m + n))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        ok = True
        for (i, j) in basis:
            ri, rj = find(i), find(m + j)
            if ri == rj:
                ok = False
                break
            parent[ri] = rj
        if not ok:
            continue
        alloc = _tree_solve(list(basis), np.asarray(mu, float),
                            np.asarray(nu, float))
        if alloc is None:
            continue
        values.append(sum(cost[i, j] * q for (i, j), q in zip(basis, alloc)))
    return values


def random_cloud_space(rng, n, d=2, metric="euclidean", uniform=True):
    pts = rng.normal(size=(n, d))
    if uniform:
        return build_space(pts, metric=metric)
    w = rng.random(n) + 0.2
    return build_space(pts, w / w.sum(), metric=metric)


def random_plan(rng, mu, nu, sweeps=400):
    """A strictly positive feasible coupling via kernel scaling."""
    from robustgw.ot_solvers import scale_kernel

    k = rng.random((len(mu), len(nu))) + 0.1
    plan, *_ = scale_kernel(k, np.asarray(mu, float), np.asarray(nu, float),
                            max_iter=sweeps, tol=1e-13)
    return plan


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)
