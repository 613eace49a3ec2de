import numpy as np
import pytest

from robustgw.contamination import (ContaminationSpec, circle_shape,
                                    contaminate, heart_shape, select_tau,
                                    two_moons_shape)


class TestContaminate:
    def test_alpha_zero_identity(self, rng):
        pts = rng.normal(size=(50, 2))
        out, idx = contaminate(pts, ContaminationSpec("replace_fraction", 0.0,
                                                      "cauchy", seed=3))
        assert idx.size == 0
        assert np.array_equal(out, pts)

    def test_exact_replacement_count(self, rng):
        # 10% of 500 points -> exactly 50 outliers, matching the 20-of-500
        # scaling of a 4% contamination level
        pts = rng.normal(size=(500, 2))
        out, idx = contaminate(pts, ContaminationSpec("replace_fraction", 0.1,
                                                      "cauchy", seed=1))
        assert idx.size == 50
        out2, idx2 = contaminate(pts, ContaminationSpec(
            "replace_fraction", 0.04, "gaussian", seed=1))
        assert idx2.size == 20

    def test_determinism_bitwise(self, rng):
        pts = rng.normal(size=(80, 2))
        spec = ContaminationSpec("replace_fraction", 0.2, "cauchy", seed=11)
        a, ia = contaminate(pts, spec)
        b, ib = contaminate(pts, spec)
        assert np.array_equal(a, b) and np.array_equal(ia, ib)

    def test_inliers_bitwise_unchanged(self, rng):
        pts = rng.normal(size=(100, 2))
        out, idx = contaminate(pts, ContaminationSpec("replace_fraction", 0.3,
                                                      "gaussian", seed=5))
        keep = np.setdiff1d(np.arange(100), idx)
        assert np.array_equal(out[keep], pts[keep])

    def test_huber_mixture_regime(self, rng):
        pts = rng.normal(size=(2000, 2))
        out, idx = contaminate(pts, ContaminationSpec("huber_mixture", 0.25,
                                                      "gaussian", seed=8))
        # binomial count near 500; 5 sigma band
        sd = np.sqrt(2000 * 0.25 * 0.75)
        assert abs(idx.size - 500) < 5 * sd

    def test_fixed_point_adversary(self, rng):
        pts = rng.normal(size=(40, 2))
        pool = np.array([[100.0, 100.0], [-100.0, -100.0]])
        out, idx = contaminate(pts, ContaminationSpec(
            "replace_fraction", 0.25, pool, seed=2))
        assert idx.size == 10
        assert all(any(np.allclose(out[i], row) for row in pool) for i in idx)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ContaminationSpec("replace_fraction", 1.0, "cauchy")
        with pytest.raises(ValueError):
            ContaminationSpec("bogus", 0.1, "cauchy")
        with pytest.raises(ValueError):
            ContaminationSpec("replace_fraction", 0.1, "uniform")


class TestSelectTau:
    def test_constant_sample(self):
        est = select_tau(np.full(100, 2.5))
        assert est.tau == 2.5
        assert est.mad == 0.0
        assert est.median == 2.5

    def test_positive_homogeneity_exact(self, rng):
        j = np.abs(rng.standard_normal(1000))
        a = select_tau(j)
        c = 3.75
        b = select_tau(c * j)
        assert b.tau == pytest.approx(c * a.tau, rel=1e-12)
        assert b.median == pytest.approx(c * a.median, rel=1e-12)
        assert b.p95 == pytest.approx(c * a.p95, rel=1e-12)

    def test_even_length_median_is_midpoint(self):
        est = select_tau(np.array([1.0, 2.0, 3.0, 4.0]))
        assert est.median == 2.5

    def test_folded_normal_constants(self):
        # analytic references: the median of |N(0,1)| is the 0.75 normal
        # quantile 0.67449, and the mean deviation about it equals
        # sqrt(2/pi) (2 exp(-m^2/2) - 1) = 0.47325, so tau -> 2.09398
        rng = np.random.default_rng(123456)
        est = select_tau(np.abs(rng.standard_normal(1_000_000)))
        assert est.median == pytest.approx(0.6744898, abs=5e-3)
        assert est.mad == pytest.approx(0.4732544, abs=5e-3)
        assert est.tau == pytest.approx(2.0942529, abs=2e-2)
        # the cutoff sits near the 96th percentile of the folded normal
        assert est.p95 < est.tau < est.p98

    def test_percentile_ordering(self, rng):
        est = select_tau(rng.random(5000))
        assert est.p95 <= est.p98

    def test_heavy_tail_pushes_tau_past_p95(self, rng):
        # adversarial contamination inflates the mean deviation much more
        # than a high percentile
        clean = np.abs(rng.standard_normal(5000))
        dirty = np.concatenate([clean, np.abs(rng.standard_cauchy(900)) * 50])
        est = select_tau(dirty)
        assert est.tau > est.p95

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            select_tau([])

    def test_json(self, rng):
        import json

        est = select_tau(rng.random(10))
        payload = json.loads(est.to_json())
        assert payload["sample_size"] == 10
        assert payload["tau"] == est.tau


class TestShapes:
    @pytest.mark.parametrize("maker", [heart_shape, circle_shape,
                                       two_moons_shape])
    def test_unit_diameter_and_count(self, maker):
        pts = maker(500, seed=4)
        assert pts.shape == (500, 2)
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        assert np.sqrt(d2.max()) == pytest.approx(1.0, abs=1e-6)

    def test_seeded_determinism(self):
        a = heart_shape(100, seed=9)
        b = heart_shape(100, seed=9)
        c = heart_shape(100, seed=10)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_heart_x_symmetry_monte_carlo(self):
        means = [heart_shape(400, seed=s)[:, 0].mean() for s in range(30)]
        grand = np.mean(means)
        se = np.std(means, ddof=1) / np.sqrt(len(means))
        assert abs(grand) <= 3 * se + 1e-3

    def test_minimum_count(self):
        with pytest.raises(ValueError):
            heart_shape(4)
