import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from docemu._validation import DegeneracyError, SolverError
from docemu.scmc import (PAPER_LOWER, PAPER_UPPER, ConstraintSpec, WeightedCloud,
                         deviation, ess, incremental_log_weights, next_tau, run_scmc,
                         soft_indicator_log, systematic_resample)

PAPER = ConstraintSpec(np.array(PAPER_LOWER), np.array(PAPER_UPPER))


def _ess_curve(cloud, spec, taus):
    out = []
    for t in taus:
        lw = incremental_log_weights(cloud, spec, t)
        out.append(ess(np.exp(lw - lw.max())))
    return np.array(out)


def _random_cloud(rng, n=400):
    return WeightedCloud(rng.random((n, 4)), np.ones(n), 0.0)


class TestConstraintSpec:
    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            ConstraintSpec(np.array([0.5, 0.1]), np.array([0.4, 0.9]))

    def test_rejects_empty_region(self):
        with pytest.raises(ValueError):
            ConstraintSpec(np.array([0.6, 0.6]), np.array([0.9, 0.9]))

    def test_roundtrip(self):
        assert ConstraintSpec.from_dict(PAPER.to_dict()) == PAPER
        assert ConstraintSpec.full_simplex(4) != PAPER

    def test_constraint_count(self):
        assert PAPER.n_constraints == 9


class TestSoftIndicator:
    def test_matches_mpmath(self):
        p = np.array([0.6, 0.3, 0.06, 0.04])
        tau = 37.0
        C = deviation(PAPER, p)
        expected = sum(mpmath.log(mpmath.ncdf(-tau * mpmath.mpf(float(c)))) for c in C)
        assert soft_indicator_log(PAPER, p, tau) == pytest.approx(float(expected), rel=1e-12)

    def test_far_tail_is_finite(self):
        # one coordinate violates its upper bound by 10/tau: Phi(-10) in the product
        tau = 1e3
        p = np.array([0.5 + 0.01, 0.3, 0.05 + 0.04, 0.05])
        p = p / p.sum()
        C = deviation(PAPER, p)
        got = soft_indicator_log(PAPER, p, tau)
        expected = sum(mpmath.log(mpmath.ncdf(-tau * mpmath.mpf(float(c)))) for c in C)
        assert np.isfinite(got)
        assert got == pytest.approx(float(expected), rel=1e-10)

    def test_phi_minus_ten(self):
        spec = ConstraintSpec(np.array([0.0, 0.0]), np.array([1.0, 0.5]))
        p = np.array([0.4, 0.6])  # exceeds upper bound 0.5 by 0.1
        tau = 100.0
        got = soft_indicator_log(spec, p, tau)
        # |sum - 1| = 0, p - u = (-0.6, 0.1), l - p = (-0.4, -0.6)
        ref = sum(mpmath.log(mpmath.ncdf(z)) for z in (0, 60, -10, 40, 60))
        assert got == pytest.approx(float(ref), rel=1e-12)

    def test_zero_temperature_is_uninformative(self):
        assert soft_indicator_log(PAPER, np.full(4, 0.25), 0.0) == pytest.approx(9 * np.log(0.5))

    def test_negative_tau(self):
        with pytest.raises(ValueError):
            soft_indicator_log(PAPER, np.full(4, 0.25), -1.0)


class TestESS:
    def test_uniform(self):
        assert ess(np.ones(50)) == pytest.approx(50)

    def test_single(self):
        w = np.zeros(10)
        w[3] = 2.5
        assert ess(w) == pytest.approx(1.0)

    def test_all_zero(self):
        with pytest.raises(DegeneracyError):
            ess(np.zeros(5))

    @given(arrays(float, st.integers(1, 60), elements=st.floats(0.0, 1e3)),
           st.floats(1e-3, 1e3))
    def test_scale_invariant_and_bounded(self, w, c):
        if w.max() <= 0:
            return
        e = ess(w)
        assert 1.0 - 1e-9 <= e <= len(w) + 1e-9
        assert ess(c * w) == pytest.approx(e, rel=1e-9)


class TestNextTau:
    def test_hits_target(self, rng):
        cloud = _random_cloud(rng)
        tau = next_tau(cloud, PAPER)
        assert _ess_curve(cloud, PAPER, [tau])[0] == pytest.approx(200, abs=1.0)

    def test_agrees_with_grid_scan(self, rng):
        cloud = _random_cloud(rng)
        tau = next_tau(cloud, PAPER)
        grid = np.geomspace(1e-3, 1e3, 2000)
        curve = _ess_curve(cloud, PAPER, grid)
        i = np.argmax(curve < 200)
        assert grid[i - 1] * 0.99 <= tau <= grid[i] * 1.01

    def test_returns_target_when_already_feasible(self, rng):
        pts = rng.dirichlet(np.ones(4), 300)
        spec = ConstraintSpec.full_simplex(4)
        cloud = WeightedCloud(pts / pts.sum(axis=1, keepdims=True), np.ones(300), 0.0)
        assert next_tau(cloud, spec, tau_target=1e6) == 1e6

    def test_tau_already_final(self, rng):
        cloud = WeightedCloud(rng.random((100, 4)), np.ones(100), 1e6)
        with pytest.raises(ValueError):
            next_tau(cloud, PAPER)

    def test_unreachable_target(self, rng):
        cloud = _random_cloud(rng, 100)
        with pytest.raises(SolverError):
            next_tau(cloud, PAPER, target_ess=101.5, tol=0.1)


class TestResample:
    @settings(max_examples=50)
    @given(arrays(float, st.integers(2, 40), elements=st.floats(1e-3, 1.0)),
           st.integers(0, 2**32 - 1))
    def test_counts_are_floor_or_ceil(self, w, seed):
        idx = systematic_resample(w, np.random.default_rng(seed))
        counts = np.bincount(idx, minlength=len(w))
        expected = len(w) * w / w.sum()
        assert np.all(counts >= np.floor(expected) - 1e-9)
        assert np.all(counts <= np.ceil(expected) + 1e-9)
        assert counts.sum() == len(w)


class TestRunSCMC:
    def test_box_and_sum(self):
        P, trace = run_scmc(PAPER, n=500, seed=3, return_trace=True)
        assert len(P) > 0.95 * 500
        assert PAPER.contains(P).all()
        assert np.abs(P.sum(axis=1) - 1).max() <= 1e-12
        assert trace.taus[-1] == 1e6
        assert np.all(np.diff(trace.taus) > 0)

    def test_deterministic(self):
        a = run_scmc(PAPER, n=200, seed=9)
        b = run_scmc(PAPER, n=200, seed=9)
        c = run_scmc(PAPER, n=200, seed=10)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_covers_region(self):
        P = run_scmc(PAPER, n=1000, seed=4)
        # each coordinate's range on the constrained simplex
        lo = np.maximum(PAPER.lower, 1 - (PAPER.upper.sum() - PAPER.upper))
        hi = np.minimum(PAPER.upper, 1 - (PAPER.lower.sum() - PAPER.lower))
        span = P.max(axis=0) - P.min(axis=0)
        assert np.all(span > 0.7 * (hi - lo))

    def test_too_few_particles(self):
        with pytest.raises(ValueError):
            run_scmc(PAPER, n=10)
