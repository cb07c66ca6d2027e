"""Trial simulation and the posterior probability of effectiveness.

Two analysis models are provided:

* binary endpoint, Beta-binomial conjugate analysis per arm;
* 4-level ordinal endpoint, proportional-odds model sampled by adaptive
  random-walk Metropolis.

For both, ``pi = P(OR < 1 | data)`` where ``OR`` is the treatment-vs-control
odds ratio, so ``pi`` near one favours the treatment.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit, logit

from ._rng import make_rng
from ._validation import check_vector
from .design import ParamPoint


class SamplerWarning(UserWarning):
    """Posterior sampler acceptance fell outside the healthy range."""


@dataclass(frozen=True)
class OrdinalPrior:
    """Normal priors on the ordered-cutpoint reparameterization and on beta."""

    beta_sd: float = 2.5
    first_cut_sd: float = 10.0
    log_increment_sd: float = 1.5


@dataclass(frozen=True)
class BinaryPrior:
    a: float = 1.0
    b: float = 1.0


@dataclass
class TrialConfig:
    n_total: int = 1000
    posterior_draws: int = 2000
    replicates: int = 1000
    seed: int = 0
    binary_prior: BinaryPrior = field(default_factory=BinaryPrior)
    ordinal_prior: OrdinalPrior = field(default_factory=OrdinalPrior)
    adapt_iterations: int = 500
    burn_in: int = 1000
    chain_batch: int = 128

    def __post_init__(self):
        if self.n_total < 2:
            raise ValueError("n_total must be at least 2")
        if self.posterior_draws < 100:
            raise ValueError("posterior_draws must be at least 100")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.seed is None:
            raise ValueError("seed is required")

    @property
    def n_per_arm(self):
        return self.n_total // 2


@dataclass
class PiSample:
    theta: ParamPoint
    draws: np.ndarray
    flags: list = field(default_factory=list)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if np.any((self.draws < 0) | (self.draws > 1)):
            raise ValueError("pi draws must lie in [0, 1]")


class ReplicateError(RuntimeError):
    def __init__(self, replicate, cause):
        super().__init__(f"replicate {replicate} failed: {cause}")
        self.replicate = replicate


# --- proportional-odds algebra -------------------------------------------

def alpha_from_p(p):
    """Cut points ``alpha_j = -logit(p_1 + ... + p_j)`` for ``j < K``."""
    p = check_vector(p, "p")
    if np.any(p <= 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be strictly positive and sum to one")
    cum = np.cumsum(p)[:-1]
    if np.any(cum <= 0) or np.any(cum >= 1):
        raise ValueError("cumulative risks must lie strictly inside (0, 1)")
    return -logit(cum)


def category_probs(alpha, beta, arm):
    """Category probabilities under ``P(Y > j) = expit(alpha_j + beta * arm)``."""
    alpha = check_vector(alpha, "alpha")
    if np.any(np.diff(alpha) >= 0):
        raise ValueError("alpha must be strictly decreasing (proportional odds)")
    tails = np.concatenate([[1.0], expit(alpha + beta * arm), [0.0]])
    q = tails[:-1] - tails[1:]
    return np.clip(q, 0.0, None)


def _ordinal_log_probs(alpha, beta, arm):
    """Stable ``log q`` for batches: alpha (B, K-1), beta (B,) -> (B, K)."""
    x = alpha + (beta * arm)[:, None]
    log_t = log_expit(x)
    first = log_expit(-x[:, :1])
    last = log_t[:, -1:]
    # log(t_j - t_{j+1}) = log t_j + log1p(-t_{j+1}/t_j)
    mid = log_t[:, :-1] + np.log1p(-np.exp(log_t[:, 1:] - log_t[:, :-1]))
    return np.concatenate([first, mid, last], axis=1)


def _unpack(theta):
    delta, beta = theta[:, :-1], theta[:, -1]
    steps = np.concatenate([delta[:, :1], -np.exp(delta[:, 1:])], axis=1)
    return np.cumsum(steps, axis=1), beta


def _log_posterior(theta, counts, prior):
    alpha, beta = _unpack(theta)
    ll = (counts[:, 0, :] * _ordinal_log_probs(alpha, beta, 0.0)).sum(axis=1)
    ll += (counts[:, 1, :] * _ordinal_log_probs(alpha, beta, 1.0)).sum(axis=1)
    lp = -0.5 * (theta[:, 0] / prior.first_cut_sd) ** 2
    lp -= 0.5 * ((theta[:, 1:-1] / prior.log_increment_sd) ** 2).sum(axis=1)
    lp -= 0.5 * (beta / prior.beta_sd) ** 2
    out = ll + lp
    return np.where(np.isfinite(out), out, -np.inf)


def _initial_theta(counts):
    pooled = counts.sum(axis=1) + 0.5
    p = pooled / pooled.sum(axis=1, keepdims=True)
    cum = np.cumsum(p, axis=1)[:, :-1]
    alpha = -logit(cum)
    delta = np.column_stack([alpha[:, 0], np.log(-np.diff(alpha, axis=1))])
    return np.column_stack([delta, np.zeros(len(counts))])


def _grad_hess(f, x, h=1e-4):
    B, d = x.shape
    f0 = f(x)
    grad = np.empty((B, d))
    hess = np.empty((B, d, d))
    eye = np.eye(d) * h
    for i in range(d):
        fp, fm = f(x + eye[i]), f(x - eye[i])
        grad[:, i] = (fp - fm) / (2 * h)
        hess[:, i, i] = (fp - 2 * f0 + fm) / h ** 2
        for j in range(i):
            e = eye[i] + eye[j]
            g = eye[i] - eye[j]
            hij = (f(x + e) - f(x + g) - f(x - g) + f(x - e)) / (4 * h ** 2)
            hess[:, i, j] = hess[:, j, i] = hij
    return f0, grad, hess


def _posterior_mode(counts, prior, n_iter=30):
    """Damped Newton ascent; returns the mode and the negative Hessian there."""
    f = lambda t: _log_posterior(t, counts, prior)  # noqa: E731
    x = _initial_theta(counts)
    B, d = x.shape
    for _ in range(n_iter):
        f0, g, H = _grad_hess(f, x)
        neg = -H
        ok = np.all(np.linalg.eigvalsh(neg) > 1e-8, axis=1)
        step = np.where(ok[:, None], 0.0, g)
        if ok.any():
            step[ok] = np.linalg.solve(neg[ok], g[ok][..., None])[..., 0]
        t = np.ones(B)
        for _ in range(30):
            cand = x + t[:, None] * step
            better = f(cand) >= f0
            if better.all():
                break
            t = np.where(better, t, 0.5 * t)
        x = np.where(better[:, None], cand, x)
        if np.max(np.abs(g)) < 1e-6:
            break
    _, _, H = _grad_hess(f, x)
    return x, -H


def _proposal_chol(neg_hess, d):
    cov = np.linalg.inv(neg_hess)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    vals, vecs = np.linalg.eigh(cov)
    # fall back to a unit-ish scale on directions the curvature cannot see
    vals = np.where(np.isfinite(vals) & (vals > 1e-10), vals, 1e-2)
    return vecs * np.sqrt(vals)[:, None, :] * (2.38 / np.sqrt(d))


def _po_pi_batch(counts, rngs, config):
    counts = np.asarray(counts, dtype=float)
    B, _, K = counts.shape
    d = K
    prior = config.ordinal_prior
    n_adapt, n_burn, n_keep = config.adapt_iterations, config.burn_in, config.posterior_draws
    n_iter = n_adapt + n_burn + n_keep
    z = np.stack([r.standard_normal((n_iter, d)) for r in rngs], axis=1)
    log_u = np.log(np.stack([r.random(n_iter) for r in rngs], axis=1))

    x, neg_hess = _posterior_mode(counts, prior)
    L = _proposal_chol(neg_hess, d)
    lp = _log_posterior(x, counts, prior)
    log_scale = np.zeros(B)
    n_neg = np.zeros(B)
    accepted_post = np.zeros(B)
    for it in range(n_iter):
        step = np.einsum("bij,bj->bi", L, z[it]) * np.exp(log_scale)[:, None]
        cand = x + step
        lp_cand = _log_posterior(cand, counts, prior)
        acc = log_u[it] < lp_cand - lp
        x = np.where(acc[:, None], cand, x)
        lp = np.where(acc, lp_cand, lp)
        if it < n_adapt:
            log_scale += (acc - 0.3) / (it + 1) ** 0.6
        else:
            accepted_post += acc
        if it >= n_adapt + n_burn:
            n_neg += x[:, -1] < 0
    pi = n_neg / n_keep
    rate = accepted_post / (n_burn + n_keep)
    return pi, rate


def _rate_flag(rate):
    if rate < 0.05 or rate > 0.95:
        return f"acceptance rate {rate:.3f} outside [0.05, 0.95]"
    return None


def po_posterior_pi(data, config, rng, return_diagnostics=False):
    """``P(beta < 0 | data)`` under the proportional-odds model.

    ``data`` is the 2 x K table of counts (row 0 control, row 1 treatment).
    A sampler acceptance rate outside ``[0.05, 0.95]`` emits a
    :class:`SamplerWarning` rather than raising.
    """
    counts = np.asarray(data, dtype=float)
    if counts.ndim != 2 or counts.shape[0] != 2 or np.any(counts < 0):
        raise ValueError("data must be a 2 x K table of nonnegative counts")
    if counts.sum() <= 0:
        raise ValueError("data has no patients")
    pi, rate = _po_pi_batch(counts[None], [rng], config)
    flag = _rate_flag(rate[0])
    if flag:
        warnings.warn(flag, SamplerWarning, stacklevel=2)
    if return_diagnostics:
        return float(pi[0]), {"acceptance_rate": float(rate[0]), "flag": flag}
    return float(pi[0])


def simulate_ordinal_trial(p, odds_ratio, n_total, rng):
    """2 x K table: control ~ Mult(n/2, p), treatment shifted by ``log OR``."""
    p = check_vector(p, "p")
    m = n_total // 2
    q1 = category_probs(alpha_from_p(p), np.log(odds_ratio), 1)
    return np.vstack([rng.multinomial(m, p / p.sum()), rng.multinomial(m, q1 / q1.sum())])


# --- binary endpoint -----------------------------------------------------

def treatment_risk(p0, odds_ratio):
    return float(expit(logit(p0) + np.log(odds_ratio)))


def binary_posterior(y, n, prior=BinaryPrior()):
    """Conjugate Beta posterior parameters for ``y`` events out of ``n``."""
    if not 0 <= y <= n:
        raise ValueError("need 0 <= y <= n")
    return prior.a + y, prior.b + n - y


def binary_posterior_pi(events, config, rng, n_draws=4000):
    """Fraction of posterior draws with ``odds(r1) / odds(r0) < 1``.

    Odds are monotone in the risk, so the comparison is made on the risks
    directly; this also avoids dividing by draws equal to 1.
    """
    y0, n0, y1, n1 = events
    a0, b0 = binary_posterior(y0, n0, config.binary_prior)
    a1, b1 = binary_posterior(y1, n1, config.binary_prior)
    r0 = rng.beta(a0, b0, n_draws)
    r1 = rng.beta(a1, b1, n_draws)
    return float(np.mean(r1 < r0))


def simulate_binary_trial(p0, odds_ratio, n_total, rng):
    m = n_total // 2
    return (int(rng.binomial(m, p0)), m,
            int(rng.binomial(m, treatment_risk(p0, odds_ratio))), m)


# --- sampling distribution over replicates -------------------------------

def sampling_distribution(theta, model, config, theta_index=0, binary_draws=4000,
                          stream="simulate"):
    """Simulate ``config.replicates`` trials at ``theta`` and return their pi values.

    Replicate ``r`` uses the stream ``(config.seed, stream, theta_index, r)``
    for both the data and the posterior computation.
    """
    if not isinstance(theta, ParamPoint):
        theta = ParamPoint(*theta)
    R = config.replicates
    rngs = [make_rng(config.seed, stream, theta_index, r) for r in range(R)]
    flags = []
    if model == "binary":
        if len(theta.p) != 1:
            raise ValueError("binary model expects a single baseline risk")
        p0 = theta.p[0]
        draws = np.empty(R)
        for r, rng in enumerate(rngs):
            try:
                events = simulate_binary_trial(p0, theta.odds_ratio, config.n_total, rng)
                draws[r] = binary_posterior_pi(events, config, rng, binary_draws)
            except Exception as exc:
                raise ReplicateError(r, exc) from exc
    elif model == "ordinal":
        p = np.asarray(theta.p)
        tables = []
        for r, rng in enumerate(rngs):
            try:
                tables.append(simulate_ordinal_trial(p, theta.odds_ratio, config.n_total, rng))
            except Exception as exc:
                raise ReplicateError(r, exc) from exc
        draws = np.empty(R)
        step = max(1, int(config.chain_batch))
        for start in range(0, R, step):
            stop = min(R, start + step)
            pi, rate = _po_pi_batch(np.stack(tables[start:stop]), rngs[start:stop], config)
            draws[start:stop] = pi
            for r in range(start, stop):
                flag = _rate_flag(rate[r - start])
                if flag:
                    flags.append((r, flag))
    else:
        raise ValueError(f"unknown model {model!r}")
    return PiSample(theta, draws, flags)
