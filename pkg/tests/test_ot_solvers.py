import numpy as np
import pytest

from conftest import enumerate_bfs_values, lp_ot_value, random_cloud_space

from robustgw.errors import NumericalError
from robustgw.mmspace import build_space
from robustgw.ot_solvers import (CouplingMatrix, SinkhornConfig, exact_ot,
                                 levy_prokhorov_trunc, robot_distance,
                                 robust_w_eps, robust_w_eps_dual, sinkhorn,
                                 truncated_w1, tukey_wasserstein,
                                 wasserstein_p)


class TestSinkhorn:
    def test_zero_cost_gives_product(self):
        mu = np.array([0.3, 0.7])
        nu = np.array([0.5, 0.25, 0.25])
        res = sinkhorn(np.zeros((2, 3)), mu, nu,
                       SinkhornConfig(epsilon=0.5, max_iter=500, tol=1e-12))
        assert np.allclose(res.coupling.plan, np.outer(mu, nu), atol=1e-10)

    def test_small_epsilon_picks_diagonal(self):
        cost = np.array([[0.0, 1.0], [1.0, 0.0]])
        mu = nu = np.array([0.5, 0.5])
        res = sinkhorn(cost, mu, nu, SinkhornConfig(epsilon=0.01, max_iter=2000))
        assert np.allclose(res.coupling.plan, 0.5 * np.eye(2), atol=1e-6)

    def test_marginal_violation_within_tol(self, rng):
        cost = rng.random((5, 7))
        mu = rng.random(5) + 0.1
        mu /= mu.sum()
        nu = rng.random(7) + 0.1
        nu /= nu.sum()
        res = sinkhorn(cost, mu, nu,
                       SinkhornConfig(epsilon=0.1, max_iter=5000, tol=1e-6))
        assert res.violation <= 1e-6
        assert res.iterations <= 5000

    def test_entropic_gap_bound(self, rng):
        # transport part sits within [OT, OT + eps log(mn)] up to tolerance
        for _ in range(5):
            m, n = rng.integers(3, 8, 2)
            cost = rng.random((m, n))
            mu = rng.random(m) + 0.1
            mu /= mu.sum()
            nu = rng.random(n) + 0.1
            nu /= nu.sum()
            eps = 0.05
            res = sinkhorn(cost, mu, nu,
                           SinkhornConfig(epsilon=eps, max_iter=20000, tol=1e-10))
            val = float(np.sum(res.coupling.plan * cost))
            exact = lp_ot_value(cost, mu, nu)
            assert val >= exact - 1e-8
            assert val <= exact + eps * np.log(m * n) + 1e-6

    def test_violation_trace_non_increasing(self, rng):
        cost = rng.random((8, 6))
        mu = np.full(8, 1 / 8)
        nu = np.full(6, 1 / 6)
        res = sinkhorn(cost, mu, nu, SinkhornConfig(epsilon=0.2, max_iter=300))
        tr = np.array(res.violation_trace)
        assert np.all(np.diff(tr) <= 1e-12)

    def test_log_domain_on_small_epsilon(self):
        # epsilon far below the cost scale would underflow a plain kernel
        cost = np.array([[0.0, 800.0], [800.0, 0.0]])
        mu = nu = np.array([0.5, 0.5])
        res = sinkhorn(cost, mu, nu, SinkhornConfig(epsilon=0.5, max_iter=500))
        assert np.allclose(res.coupling.plan, 0.5 * np.eye(2), atol=1e-9)

    def test_underflow_raises_with_advice(self):
        # a full kernel row vanishes even in the log domain once cost/eps
        # overflows; the error advises a larger epsilon or cost rescaling
        cost = np.array([[0.0, 1e300], [1e300, 1e300]])
        mu = nu = np.array([0.5, 0.5])
        with pytest.raises(NumericalError, match="epsilon"):
            sinkhorn(cost, mu, nu, SinkhornConfig(epsilon=1e-9, max_iter=50))

    def test_max_iter_reports_violation(self):
        # an unreachable marginal pattern must not raise: the partial state
        # comes back with its violation reported
        cost = np.array([[0.0, 0.0], [0.0, 1e6]])
        mu = nu = np.array([0.5, 0.5])
        res = sinkhorn(cost, mu, nu, SinkhornConfig(epsilon=1.0, max_iter=40))
        assert res.iterations == 40
        assert np.isfinite(res.violation)

    def test_rejects_zero_marginals(self):
        with pytest.raises(ValueError, match="zero atoms"):
            sinkhorn(np.zeros((2, 2)), np.array([1.0, 0.0]),
                     np.array([0.5, 0.5]), SinkhornConfig(epsilon=0.1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SinkhornConfig(epsilon=0.0)
        with pytest.raises(ValueError):
            SinkhornConfig(epsilon=1.0, tol=0.0)


class TestExactOt:
    def test_identity_instance(self, rng):
        pts = rng.normal(size=(5, 2))
        sp = build_space(pts)
        coupling, value = exact_ot(sp.dist, sp.weights, sp.weights)
        assert value == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(coupling.plan, np.diag(sp.weights), atol=1e-12)

    def test_dirac_row_forced(self, rng):
        cost = rng.random((1, 4))
        nu = np.array([0.1, 0.2, 0.3, 0.4])
        coupling, value = exact_ot(cost, np.array([1.0]), nu)
        assert np.allclose(coupling.plan[0], nu)
        assert value == pytest.approx(float(cost[0] @ nu))

    def test_three_by_three_vs_bfs_enumeration(self, rng):
        for _ in range(8):
            cost = rng.random((3, 3))
            mu = rng.random(3) + 0.2
            mu /= mu.sum()
            nu = rng.random(3) + 0.2
            nu /= nu.sum()
            _, value = exact_ot(cost, mu, nu)
            best = min(enumerate_bfs_values(cost, mu, nu))
            assert value == pytest.approx(best, abs=1e-9)

    def test_matches_lp_on_random_instances(self, rng):
        for _ in range(10):
            m, n = rng.integers(2, 12, 2)
            cost = rng.random((m, n)) * 10
            mu = rng.random(m) + 0.05
            mu /= mu.sum()
            nu = rng.random(n) + 0.05
            nu /= nu.sum()
            coupling, value = exact_ot(cost, mu, nu)
            assert value == pytest.approx(lp_ot_value(cost, mu, nu), abs=1e-9)
            assert coupling.marginal_violation() < 1e-9

    def test_zero_atoms_dropped_and_reinserted(self, rng):
        cost = rng.random((3, 3))
        mu = np.array([0.5, 0.0, 0.5])
        nu = np.array([0.25, 0.75, 0.0])
        coupling, value = exact_ot(cost, mu, nu)
        assert np.all(coupling.plan[1, :] == 0.0)
        assert np.all(coupling.plan[:, 2] == 0.0)
        assert coupling.marginal_violation() < 1e-9

    def test_degenerate_marginals(self):
        # many equal weights force degenerate pivots; Bland fallback must cope
        n = 8
        cost = (np.arange(n)[:, None] - np.arange(n)[None, :]) ** 2.0
        mu = nu = np.full(n, 1.0 / n)
        _, value = exact_ot(cost, mu, nu)
        assert value == pytest.approx(0.0, abs=1e-12)

    def test_size_limit(self):
        with pytest.raises(ValueError, match="limit"):
            exact_ot(np.zeros((101, 101)), np.full(101, 1 / 101),
                     np.full(101, 1 / 101))


class TestRobustVariants:
    def test_tukey_w_identity(self, rng):
        sp = random_cloud_space(rng, 6)
        assert tukey_wasserstein(sp, sp, p=2, tau=1.0) == pytest.approx(0.0, abs=1e-9)

    def test_tukey_w_infinite_tau_is_wp(self, rng):
        x = random_cloud_space(rng, 5)
        y = random_cloud_space(rng, 6)
        for p in (1.0, 2.0):
            assert tukey_wasserstein(x, y, p=p, tau=np.inf) == \
                pytest.approx(wasserstein_p(x, y, p=p), abs=1e-12)

    def test_tukey_w_two_points_beyond_tau(self):
        # all transport pays the cap when every cross-distance exceeds tau
        x = build_space([[0.0, 0.0]])
        y = build_space([[10.0, 0.0]])
        assert tukey_wasserstein(x, y, p=1, tau=0.5) == pytest.approx(0.5)

    def test_robot_zero_level(self, rng):
        x = random_cloud_space(rng, 4)
        y = random_cloud_space(rng, 5)
        assert robot_distance(x, y, 0.0) == pytest.approx(0.0)

    def test_robot_inactive_truncation_is_w1(self, rng):
        x = random_cloud_space(rng, 4)
        y = random_cloud_space(rng, 5)
        lam = 100.0  # 2 lam above any cross-distance
        assert robot_distance(x, y, lam) == pytest.approx(
            wasserstein_p(x, y, p=1), abs=1e-12)

    def test_truncated_w1_per_plan_dominates_capped_distortion(self, rng):
        # for any coupling, the capped distortion of matched pairs is at
        # most twice the truncated cross cost of the plan (6-point check)
        from conftest import random_plan

        x = random_cloud_space(rng, 6)
        y = random_cloud_space(rng, 6)
        lam = 0.8
        for _ in range(5):
            plan = random_plan(rng, x.weights, y.weights)
            cross = np.sqrt(np.maximum(
                np.sum((x.points[:, None, :] - y.points[None, :, :]) ** 2, -1), 0))
            lhs = 0.0
            for i in range(6):
                for j in range(6):
                    for a in range(6):
                        for b in range(6):
                            lhs += min(abs(x.dist[i, a] - y.dist[j, b]), 2 * lam) \
                                * plan[i, j] * plan[a, b]
            rhs = 2.0 * float(np.sum(np.minimum(cross, 2 * lam) * plan))
            assert lhs <= rhs + 1e-9


class TestRobustWEps:
    def test_eps_zero_equals_wp(self, rng):
        x = random_cloud_space(rng, 5)
        y = random_cloud_space(rng, 6)
        for p in (1.0, 2.0):
            assert robust_w_eps(x, y, p=p, eps=0.0) == \
                pytest.approx(wasserstein_p(x, y, p=p), abs=1e-8)

    def test_monotone_decreasing_in_eps(self, rng):
        x = random_cloud_space(rng, 5)
        y = random_cloud_space(rng, 5)
        vals = [robust_w_eps(x, y, p=1, eps=e)
                for e in (0.0, 0.1, 0.2, 0.35, 0.5)]
        assert all(a >= b - 1e-10 for a, b in zip(vals, vals[1:]))

    def test_outlier_atom_unloaded(self):
        # nu equals mu except one atom pushed far away; once eps covers that
        # atom's inflated mass the robust value collapses to the clean match
        base = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        far = base.copy()
        far[3] = [500.0, 500.0]
        x = build_space(base)
        y = build_space(far)
        dirty = robust_w_eps(x, y, p=1, eps=0.0)
        clean = robust_w_eps(x, y, p=1, eps=0.25)
        assert dirty > 100.0
        assert clean == pytest.approx(0.0, abs=1e-9)

    def test_primal_equals_dual(self, rng):
        for _ in range(6):
            x = random_cloud_space(rng, 4, uniform=False)
            y = random_cloud_space(rng, 5, uniform=False)
            for eps, eps2 in ((0.0, None), (0.15, None), (0.3, 0.1)):
                p = 2.0
                primal = robust_w_eps(x, y, p=p, eps=eps, eps2=eps2) ** p
                dual = robust_w_eps_dual(x, y, p=p, eps=eps, eps2=eps2)
                assert primal == pytest.approx(dual, abs=1e-6)

    def test_dual_check_mode(self, rng):
        x = random_cloud_space(rng, 4)
        y = random_cloud_space(rng, 4)
        robust_w_eps(x, y, p=1, eps=0.2, dual_check=True)

    def test_eps_validation(self, rng):
        x = random_cloud_space(rng, 3)
        with pytest.raises(ValueError):
            robust_w_eps(x, x, eps=1.0)


class TestLevyProkhorov:
    def test_identity_is_zero(self, rng):
        sp = random_cloud_space(rng, 5)
        assert levy_prokhorov_trunc(sp, sp, lam=0.7) == pytest.approx(0.0)

    def test_all_far_hits_lambda(self):
        x = build_space([[0.0, 0.0], [0.1, 0.0]])
        y = build_space([[50.0, 0.0], [50.1, 0.0]])
        lam = 0.5
        val = levy_prokhorov_trunc(x, y, lam=lam)
        assert val == pytest.approx(lam, abs=1e-4 * lam * 2)

    def test_sandwich(self, rng):
        for _ in range(6):
            x = random_cloud_space(rng, 5)
            y = random_cloud_space(rng, 5)
            lam = 1.0
            rho = levy_prokhorov_trunc(x, y, lam=lam, tol=1e-5)
            w = truncated_w1(x, y, lam)
            assert w / (1 + lam) <= rho + 1e-4
            assert rho <= np.sqrt(w) + 1e-4

    def test_zero_lambda(self, rng):
        x = random_cloud_space(rng, 3)
        assert levy_prokhorov_trunc(x, x, lam=0.0) == 0.0


class TestCouplingMatrix:
    def test_validate_balanced(self):
        plan = np.full((2, 2), 0.25)
        c = CouplingMatrix(plan, np.array([0.5, 0.5]), np.array([0.5, 0.5]))
        c.validate()
        bad = CouplingMatrix(plan * 0.5, np.array([0.5, 0.5]),
                             np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            bad.validate()
        bad.validate(mode="partial")  # below-capacity mass is fine there
