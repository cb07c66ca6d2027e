import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from docemu.doc import (SimStudyConfig, beta_cdf, beta_exceedance, covering_design,
                        doc_estimate, mc_power, run_sim_study, sim_metrics)


def _quad_exceedance(a, b, u):
    f = lambda x: x ** (a - 1) * (1 - x) ** (b - 1)
    mpmath.mp.dps = 30
    return float(mpmath.quad(f, [u, 1]) / mpmath.beta(a, b))


class TestBetaTail:
    def test_uniform(self):
        assert beta_exceedance(1, 1, 0.95) == pytest.approx(0.05, abs=1e-12)

    @pytest.mark.parametrize("a,b,u", [(2.5, 7.0, 0.3), (0.6, 0.9, 0.95), (40.0, 3.0, 0.98),
                                       (5.0, 200.0, 0.01)])
    def test_matches_quadrature(self, a, b, u):
        assert beta_exceedance(a, b, u) == pytest.approx(_quad_exceedance(a, b, u), abs=1e-10)

    @given(st.floats(0.1, 100), st.floats(0.1, 100), st.floats(0.001, 0.999))
    def test_complement(self, a, b, u):
        assert beta_exceedance(a, b, u) + beta_cdf(a, b, u) == pytest.approx(1.0, abs=1e-12)

    def test_vectorized(self):
        out = beta_exceedance(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 0.5)
        np.testing.assert_allclose(out, [0.5, 0.5])

    @pytest.mark.parametrize("u", [0.0, 1.0, 1.2])
    def test_threshold_range(self, u):
        with pytest.raises(ValueError):
            beta_exceedance(1, 1, u)

    def test_shape_positive(self):
        with pytest.raises(ValueError):
            beta_exceedance(0, 1, 0.5)


class TestDOCEstimate:
    def test_interval_contains_point(self, rng):
        pairs = np.column_stack([rng.gamma(20, 0.2, 500), rng.gamma(10, 0.1, 500)])
        est = doc_estimate(pairs, "sup", 0.9)
        assert est.ci_low <= est.point <= est.ci_high
        assert est.statistic == "superiority"

    def test_degenerate_draws(self):
        est = doc_estimate(np.tile([[3.0, 2.0]], (10, 1)), "fut", 0.05)
        expected = float(1 - beta_exceedance(3.0, 2.0, 0.05))
        assert est.point == pytest.approx(expected) and est.ci_low <= est.point <= est.ci_high

    def test_monotone_in_threshold(self, rng):
        pairs = np.column_stack([rng.gamma(20, 0.2, 200), rng.gamma(10, 0.1, 200)])
        sup = [doc_estimate(pairs, "sup", u).point for u in (0.9, 0.95, 0.98)]
        fut = [doc_estimate(pairs, "fut", u).point for u in (0.01, 0.05)]
        assert sup[0] >= sup[1] >= sup[2]
        assert fut[0] <= fut[1]

    def test_unknown_statistic(self):
        with pytest.raises(ValueError):
            doc_estimate(np.ones((3, 2)), "inferiority", 0.5)

    def test_empty(self):
        with pytest.raises(ValueError):
            doc_estimate(np.empty((0, 2)))


class TestMetrics:
    @settings(max_examples=100)
    @given(arrays(float, st.integers(1, 200), elements=st.floats(0, 1)), st.floats(0, 1))
    def test_rmse_decomposition(self, phi, truth):
        rmse, bias, psd = sim_metrics(phi, truth)
        assert rmse ** 2 == pytest.approx(bias ** 2 + psd ** 2, abs=1e-12)

    def test_mc_power_strict(self):
        assert mc_power(np.array([0.95, 0.96, 0.5, 0.951]), 0.95) == 0.5


class TestSimStudy:
    def test_covering_design_in_rectangle(self):
        cfg = SimStudyConfig(seed=2)
        pts = covering_design(cfg, 0)
        assert pts.shape == (20, 2)
        assert np.all((pts[:, 0] >= 0.25) & (pts[:, 0] <= 0.7))
        assert np.all((pts[:, 1] >= 0.6) & (pts[:, 1] <= 1.0))

    def test_tiny_study(self):
        cfg = SimStudyConfig(replications=2, training_size=8, n_cover=40, test_n_p0=3,
                             test_n_or=3, replicates=100, binary_draws=400,
                             predictive_draws=200, n_restarts=1, seed=4)
        rep = run_sim_study(cfg)
        assert rep.rmse.shape == (9,)
        assert np.all(rep.rmse >= np.abs(rep.bias) - 1e-12)
        assert np.all((rep.phi_true >= 0) & (rep.phi_true <= 1))
        assert rep.per_replication["metrics"].shape == (2, 9, 4)
