"""Sequentially constrained Monte Carlo on a box-bounded simplex.

A uniform sample on ``[0, 1]^d`` is filtered through a sequence of
tempered densities ``U(p) * prod Phi(-tau * C(p))`` where ``C`` is the
constraint deviation vector.  The temperature ``tau`` is chosen adaptively
so the effective sample size of the incremental weights drops to a target
(usually ``N / 2``) at every step.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from ._rng import make_rng
from ._validation import DegeneracyError, SolverError, check_vector

DEFAULT_TAU_TARGET = 1e6
PAPER_LOWER = (0.5, 0.05, 0.01, 0.005)
PAPER_UPPER = (0.9, 0.30, 0.05, 0.025)


class SCMCError(SolverError):
    """The temperature schedule failed to reach its target."""


@dataclass(frozen=True, eq=False)
class ConstraintSpec:
    """Box bounds ``lower < p < upper`` plus the equality ``sum(p) == 1``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = check_vector(self.lower, "lower")
        upper = check_vector(self.upper, "upper", size=lower.shape[0])
        if np.any(lower < 0) or np.any(upper > 1) or np.any(lower >= upper):
            raise ValueError("bounds must satisfy 0 <= lower < upper <= 1")
        if lower.sum() > 1 or upper.sum() < 1:
            raise ValueError("bounds exclude every point of the simplex")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    def __eq__(self, other):
        if not isinstance(other, ConstraintSpec):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __hash__(self):
        return hash((tuple(self.lower), tuple(self.upper)))

    @classmethod
    def full_simplex(cls, dim=4):
        return cls(np.zeros(dim), np.ones(dim))

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def n_constraints(self):
        return 1 + 2 * self.dim

    def contains(self, points, atol=1e-12):
        """Exact membership test (closed box, sum within ``atol``)."""
        P = np.atleast_2d(points)
        on_simplex = np.abs(P.sum(axis=1) - 1.0) <= atol
        in_box = np.all((P >= self.lower) & (P <= self.upper), axis=1)
        return on_simplex & in_box

    def to_dict(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["lower"], float), np.asarray(d["upper"], float))


@dataclass
class WeightedCloud:
    points: np.ndarray
    weights: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.points.ndim != 2 or self.weights.shape != (self.points.shape[0],):
            raise ValueError("points must be N x d and weights length N")
        total = self.weights.sum()
        if np.any(self.weights < 0) or not np.isfinite(total) or total <= 0:
            raise DegeneracyError("cloud weights must be nonnegative with positive sum")
        if self.tau < 0:
            raise ValueError("tau must be nonnegative")

    @property
    def n(self):
        return self.points.shape[0]


def _deviation_matrix(spec, P):
    return np.column_stack([
        np.abs(P.sum(axis=1) - 1.0),
        P - spec.upper,
        spec.lower - P,
    ])


def deviation(spec, p):
    """Constraint deviation vector of a single point.

    Entry 0 is ``|sum(p) - 1|``, then ``p - upper`` and ``lower - p``.
    A point of the constrained simplex has entry 0 equal to zero and every
    other entry nonpositive.
    """
    p = check_vector(p, "p", size=spec.dim)
    return _deviation_matrix(spec, p[None, :])[0]


def _log_indicator(spec, P, tau):
    C = _deviation_matrix(spec, P)
    return log_ndtr(-tau * C).sum(axis=1)


def soft_indicator_log(spec, p, tau):
    """Log of the probit-relaxed membership indicator at temperature ``tau``."""
    tau = float(tau)
    if not tau >= 0:
        raise ValueError("tau must be nonnegative")
    p = check_vector(p, "p", size=spec.dim)
    return float(_log_indicator(spec, p[None, :], tau)[0])


def ess(weights):
    """Effective sample size ``(sum w)^2 / sum w^2``; scale invariant."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be a finite nonnegative vector")
    m = w.max(initial=0.0)
    if m <= 0:
        raise DegeneracyError("all weights are zero")
    w = w / m
    return float(w.sum() ** 2 / np.dot(w, w))


def _ess_from_log(logw):
    return ess(np.exp(logw - logw.max()))


def incremental_log_weights(cloud, spec, tau):
    return (_log_indicator(spec, cloud.points, tau)
            - _log_indicator(spec, cloud.points, cloud.tau))


def next_tau(cloud, spec, target_ess=None, tau_target=DEFAULT_TAU_TARGET,
             tol=1.0, max_iter=100):
    """Solve for the next temperature so the incremental-weight ESS hits a target.

    Bisection on ``[cloud.tau, tau_target]`` (geometric midpoints once the
    lower end is positive).  Returns ``tau_target`` when even the final
    temperature keeps the ESS at or above ``target_ess``.
    """
    if target_ess is None:
        target_ess = cloud.n / 2.0
    if not cloud.tau < tau_target:
        raise ValueError("cloud is already at the target temperature")

    def ess_at(t):
        return _ess_from_log(incremental_log_weights(cloud, spec, t))

    lo, hi = float(cloud.tau), float(tau_target)
    ess_lo, ess_hi = ess_at(lo), ess_at(hi)
    if ess_hi >= target_ess - tol:
        return hi
    if ess_lo < target_ess - tol:
        raise SolverError(
            "ESS already below target at the current temperature",
            {"tau": lo, "ess": ess_lo, "target": target_ess},
        )

    for _ in range(max_iter):
        mid = np.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        # Geometric midpoints stall when lo == 0 and hi is huge; the
        # arithmetic branch covers that first descent.
        e = ess_at(mid)
        if abs(e - target_ess) <= tol:
            return float(mid)
        if e > target_ess:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    raise SolverError(
        "bisection did not meet the ESS tolerance",
        {"bracket": (lo, hi), "ess_lo": ess_at(lo), "ess_hi": ess_at(hi),
         "target": target_ess},
    )


def systematic_resample(weights, rng):
    """Indices drawn by systematic resampling (one uniform offset)."""
    w = np.asarray(weights, dtype=float)
    n = w.shape[0]
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cdf, positions, side="right")


def _proposal_factor(points):
    # eigh tolerates the near-singular covariance that appears once the
    # cloud collapses onto the hyperplane sum(p) == 1
    cov = np.atleast_2d(np.cov(points, rowvar=False))
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def _move(points, logp, spec, tau, scale, rng, n_moves):
    n, d = points.shape
    factor = _proposal_factor(points)
    accepted = 0
    for _ in range(n_moves):
        prop = points + scale * rng.standard_normal((n, d)) @ factor.T
        inside = np.all((prop >= 0.0) & (prop <= 1.0), axis=1)
        logp_prop = np.full(n, -np.inf)
        logp_prop[inside] = _log_indicator(spec, prop[inside], tau)
        log_u = np.log(rng.random(n))
        acc = log_u < logp_prop - logp
        points[acc] = prop[acc]
        logp[acc] = logp_prop[acc]
        accepted += int(acc.sum())
    return accepted / (n * n_moves)


@dataclass
class SCMCTrace:
    taus: list = field(default_factory=list)
    ess_before_resample: list = field(default_factory=list)
    ess_after_resample: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)
    n_dropped: int = 0


def run_scmc(spec, n=2000, tau_target=DEFAULT_TAU_TARGET, seed=0,
             mcmc_moves_per_step=20, target_ess_fraction=0.5, max_steps=200,
             return_trace=False):
    """Draw an approximately uniform covering sample of the constrained simplex.

    Parameters
    ----------
    spec : ConstraintSpec
        Box bounds of the region.
    n : int
        Number of particles (constant through the run).
    tau_target : float
        Final probit temperature.
    seed : int
        Master seed; each temperature step uses its own derived stream.
    mcmc_moves_per_step : int
        Random-walk Metropolis sweeps applied after each resampling.

    Returns
    -------
    points : ndarray of shape (n_kept, d)
        Final particles, normalized onto the simplex; any that then fall
        outside the box are dropped.
    trace : SCMCTrace
        Only when ``return_trace`` is true.
    """
    if n < 100:
        raise ValueError("n must be at least 100")
    if not tau_target > 0:
        raise ValueError("tau_target must be positive")
    d = spec.dim
    rng = make_rng(seed, "scmc", 0)
    cloud = WeightedCloud(rng.random((n, d)), np.ones(n), 0.0)
    trace = SCMCTrace(taus=[0.0])
    scale = 2.38 / np.sqrt(d)

    step = 0
    while cloud.tau < tau_target:
        step += 1
        if step > max_steps:
            raise SCMCError(
                f"tau did not reach {tau_target} within {max_steps} steps",
                {"taus": list(trace.taus)},
            )
        tau = next_tau(cloud, spec, target_ess_fraction * n, tau_target)
        logw = incremental_log_weights(cloud, spec, tau)
        w = np.exp(logw - logw.max())
        trace.ess_before_resample.append(ess(w))

        step_rng = make_rng(seed, "scmc", step)
        idx = systematic_resample(w, step_rng)
        points = cloud.points[idx].copy()
        cloud = WeightedCloud(points, np.ones(n), tau)
        trace.ess_after_resample.append(ess(cloud.weights))

        logp = _log_indicator(spec, points, tau)
        rate = _move(points, logp, spec, tau, scale, step_rng, mcmc_moves_per_step)
        if rate < 0.25:
            scale *= 0.7
        elif rate > 0.45:
            scale *= 1.3
        trace.taus.append(tau)
        trace.acceptance.append(rate)

    P = cloud.points / cloud.points.sum(axis=1, keepdims=True)
    keep = np.all((P >= spec.lower) & (P <= spec.upper), axis=1)
    trace.n_dropped = int((~keep).sum())
    P = P[keep]
    if return_trace:
        return P, trace
    return P
