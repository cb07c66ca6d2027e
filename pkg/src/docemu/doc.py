"""Design operating characteristics from emulated Beta draws.

Each posterior ``(a_k, b_k)`` pair yields one draw of the operating
characteristic, e.g. ``phi_k = P(pi > U; a_k, b_k)`` for superiority or
``P(pi < l; a_k, b_k)`` for futility.  The draws are summarized by their
mean and central 95% interval.
"""
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import betainc, betaincc

from ._rng import derive_seed, make_rng
from ._validation import check_probability
from .design import CentroidDesign, grid_design
from .emulator import BetaGPEmulator
from .trial_models import TrialConfig, sampling_distribution

log = logging.getLogger(__name__)

STATISTICS = ("superiority", "futility")


def _check_shapes(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("Beta parameters must be positive")
    return a, b


def beta_exceedance(a, b, u):
    """Upper tail ``1 - F(u; a, b)`` of a Beta distribution."""
    a, b = _check_shapes(a, b)
    u = check_probability(u, "u")
    return betaincc(a, b, u)


def beta_cdf(a, b, u):
    a, b = _check_shapes(a, b)
    u = check_probability(u, "u")
    return betainc(a, b, u)


@dataclass
class DOCEstimate:
    theta: np.ndarray
    statistic: str
    threshold: float
    point: float
    ci_low: float
    ci_high: float
    draws: np.ndarray = field(repr=False)


def doc_estimate(draws, kind="superiority", threshold=0.95, level=0.95):
    """Summarize the operating characteristic implied by predictive ``(a, b)`` draws.

    ``draws`` is a :class:`~docemu.emulator.PredictiveDraws` or a ``K x 2``
    array of pairs.
    """
    pairs = getattr(draws, "pairs", draws)
    theta = getattr(draws, "theta", None)
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise ValueError("draws must be a nonempty K x 2 array of (a, b)")
    if kind in ("sup", "superiority"):
        kind = "superiority"
        phi = beta_exceedance(pairs[:, 0], pairs[:, 1], threshold)
    elif kind in ("fut", "futility"):
        kind = "futility"
        phi = beta_cdf(pairs[:, 0], pairs[:, 1], threshold)
    else:
        raise ValueError(f"unknown statistic {kind!r}")
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(phi, [tail, 1.0 - tail])
    point = float(phi.mean())
    # quantile interpolation can leave the mean a few ulps outside the interval
    lo, hi = min(float(lo), point), max(float(hi), point)
    return DOCEstimate(theta, kind, float(threshold), point, lo, hi, phi)


def mc_power(pi_sample, u):
    """Fraction of simulated pi values strictly above ``u``."""
    draws = np.asarray(getattr(pi_sample, "draws", pi_sample), dtype=float)
    if draws.size == 0:
        raise ValueError("empty pi sample")
    return float(np.mean(draws > u))


def sim_metrics(doc, phi_true):
    """``(rmse, bias, psd)`` of the phi draws against a reference value.

    Population (divisor K) definitions, so ``rmse**2 == bias**2 + psd**2``.
    """
    phi = np.asarray(getattr(doc, "draws", doc), dtype=float)
    if phi.size == 0:
        raise ValueError("no phi draws")
    phi_hat = phi.mean()
    rmse = np.sqrt(np.mean((phi - phi_true) ** 2))
    psd = np.sqrt(np.mean((phi - phi_hat) ** 2))
    return float(rmse), float(phi_hat - phi_true), float(psd)


# --- simulation study ----------------------------------------------------

@dataclass
class SimStudyConfig:
    replications: int = 100
    n_cover: int = 100
    training_size: int = 20
    p0_range: tuple = (0.25, 0.7)
    or_range: tuple = (0.6, 1.0)
    test_n_p0: int = 10
    test_n_or: int = 10
    n_total: int = 1000
    replicates: int = 1000
    binary_draws: int = 4000
    predictive_draws: int = 1000
    threshold: float = 0.95
    n_restarts: int = 8
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("p0_range", "or_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass
class SimStudyReport:
    test_points: np.ndarray
    phi_true: np.ndarray
    rmse: np.ndarray
    bias: np.ndarray
    psd: np.ndarray
    per_replication: dict = field(repr=False, default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def mean_rmse(self):
        return float(self.rmse.mean())

    @property
    def mean_abs_bias(self):
        return float(np.abs(self.bias).mean())

    @property
    def max_abs_bias(self):
        return float(np.abs(self.bias).max())


def _binary_pi_samples(points, config, trial_seed, binary_draws):
    tc = TrialConfig(n_total=config.n_total, posterior_draws=max(100, binary_draws),
                     replicates=config.replicates, seed=trial_seed)
    return [sampling_distribution(((p0,), o), "binary", tc, theta_index=i,
                                  binary_draws=binary_draws).draws
            for i, (p0, o) in enumerate(points)]


def true_power(test_points, config):
    """Monte Carlo power at each test point, on its own seed stream."""
    samples = _binary_pi_samples(test_points, config, derive_seed(config.seed, "truth"),
                                 config.binary_draws)
    return np.array([mc_power(s, config.threshold) for s in samples])


def covering_design(config, rep):
    """Uniform covering sample of the rectangle, clustered to ``training_size`` points."""
    rng = make_rng(config.seed, "simstudy-cover", rep)
    lo = np.array([config.p0_range[0], config.or_range[0]])
    hi = np.array([config.p0_range[1], config.or_range[1]])
    unit = rng.random((config.n_cover, 2))
    km = CentroidDesign(config.training_size, project_simplex=False,
                        random_state=derive_seed(config.seed, "simstudy-kmeans", rep))
    centers = km.fit(unit).cluster_centers_
    return lo + centers * (hi - lo)


def run_replication(config, rep, test_points, phi_true):
    train = covering_design(config, rep)
    pis = _binary_pi_samples(train, config, derive_seed(config.seed, "simstudy-trials", rep),
                             config.binary_draws)
    bounds = np.array([[config.p0_range[0], config.or_range[0]],
                       [config.p0_range[1], config.or_range[1]]])
    em = BetaGPEmulator(n_restarts=config.n_restarts, input_bounds=bounds,
                        random_state=derive_seed(config.seed, "simstudy-gp", rep))
    em.fit(train, pis)
    draws = em.sample_ab(test_points, config.predictive_draws,
                         derive_seed(config.seed, "simstudy-predict", rep))
    out = np.empty((len(test_points), 4))
    for i, dr in enumerate(draws):
        est = doc_estimate(dr, "superiority", config.threshold)
        out[i, :3] = sim_metrics(est, phi_true[i])
        out[i, 3] = est.point
    return out


def run_sim_study(config, progress=None):
    """Repeat design -> simulate -> emulate over fresh training sets.

    Returns per-test-point RMSE, bias and PSD averaged over replications.
    """
    if isinstance(config, dict):
        config = SimStudyConfig.from_dict(config)
    test = grid_design(config.p0_range, config.or_range,
                       config.test_n_p0, config.test_n_or).to_array()
    t0 = time.perf_counter()
    phi_true = true_power(test, config)
    timings = {"truth": time.perf_counter() - t0}
    results = []
    t0 = time.perf_counter()
    for rep in range(config.replications):
        try:
            results.append(run_replication(config, rep, test, phi_true))
        except Exception as exc:
            raise RuntimeError(f"simulation-study replication {rep} failed: {exc}") from exc
        if progress:
            progress(rep)
        log.info("replication %d done", rep)
    timings["replications"] = time.perf_counter() - t0
    stack = np.stack(results)
    return SimStudyReport(
        test_points=test, phi_true=phi_true,
        rmse=stack[:, :, 0].mean(axis=0), bias=stack[:, :, 1].mean(axis=0),
        psd=stack[:, :, 2].mean(axis=0),
        per_replication={"metrics": stack, "config": asdict(config)},
        timings=timings,
    )
