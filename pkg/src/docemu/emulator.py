"""Beta surrogate for the sampling distribution of pi, emulated by two GPs.

At each training parameter the simulated pi values are summarized by a
Beta(a, b) fit (maximum likelihood or moments).  The shape surfaces ``a(theta)`` and
``b(theta)`` are modelled by independent Gaussian processes with a constant
mean and an ARD squared-exponential kernel; positive joint draws at new
parameters are obtained by rejection.
"""
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.special import betaln, digamma, polygamma
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import derive_seed, make_rng
from ._validation import (ConditioningError, DegeneracyError, SolverError,
                          check_matrix, check_vector)


# --- Beta maximum likelihood ---------------------------------------------

@dataclass
class BetaFit:
    a: float
    b: float
    n_draws: int
    clamp_count: int
    iterations: int = 0
    ks_statistic: float = float("nan")


def beta_moments_init(mean, var):
    """Method-of-moments ``(a, b)`` for a Beta with given mean and variance."""
    common = mean * (1.0 - mean) / var - 1.0
    return mean * common, (1.0 - mean) * common


def _beta_loglik(a, b, s1, s2, n):
    return (a - 1.0) * s1 + (b - 1.0) * s2 - n * betaln(a, b)


def fit_beta(draws, method="mle", tol=1e-12, max_iter=200):
    """Beta fit to values in ``[0, 1]``.

    Values are clamped to ``[eps, 1 - eps]`` with ``eps = 1 / (2M)``.  With
    ``method="mle"`` Newton iterations on the digamma score equations start
    from the moment estimates and are step-halved to keep the likelihood
    increasing; ``method="moments"`` stops at the moment estimates.

    The likelihood weights ``log(1 - x)``, so a block of draws clamped at
    ``1 - eps`` pulls the MLE hard; the moment fit is far less sensitive to it.
    """
    if method not in ("mle", "moments"):
        raise ValueError(f"unknown method {method!r}")
    x = check_vector(draws, "draws")
    M = x.shape[0]
    if M < 10:
        raise ValueError("need at least 10 draws")
    if np.any((x < 0) | (x > 1)):
        raise ValueError("draws must lie in [0, 1]")
    eps = 1.0 / (2 * M)
    xc = np.clip(x, eps, 1.0 - eps)
    clamp_count = int(np.count_nonzero(xc != x))
    mean, var = xc.mean(), xc.var()
    if np.ptp(xc) == 0 or var <= 0:
        raise DegeneracyError("all draws identical after clamping")

    a, b = beta_moments_init(mean, var)
    if not (a > 0 and b > 0):
        # moment estimates break down for U-shaped samples
        a, b = mean, 1.0 - mean
    if method == "moments":
        return BetaFit(float(a), float(b), M, clamp_count, 0, _ks(xc, a, b))
    s1, s2 = np.log(xc).sum(), np.log1p(-xc).sum()
    m1, m2 = s1 / M, s2 / M
    ll = _beta_loglik(a, b, s1, s2, M)
    for it in range(1, max_iter + 1):
        psi_ab = digamma(a + b)
        g = np.array([digamma(a) - psi_ab - m1, digamma(b) - psi_ab - m2])
        t_ab = polygamma(1, a + b)
        J = np.array([[polygamma(1, a) - t_ab, -t_ab],
                      [-t_ab, polygamma(1, b) - t_ab]])
        step = np.linalg.solve(J, g)
        lam = 1.0
        while True:
            na, nb = a - lam * step[0], b - lam * step[1]
            if na > 0 and nb > 0:
                nll = _beta_loglik(na, nb, s1, s2, M)
                if nll >= ll - 1e-12 * abs(ll):
                    break
            lam *= 0.5
            if lam < 1e-12:
                raise SolverError("Beta MLE line search failed", {"a": a, "b": b})
        converged = abs(na - a) <= tol * na and abs(nb - b) <= tol * nb
        a, b, ll = na, nb, nll
        if converged:
            break
    return BetaFit(float(a), float(b), M, clamp_count, it, _ks(xc, a, b))


def _ks(x, a, b):
    # goodness of fit only; the Beta family is kept regardless
    return float(stats.kstest(x, stats.beta(a, b).cdf).statistic)


# --- Gaussian process ----------------------------------------------------

def _sq_exp(X1, X2, lengthscales, signal_variance):
    D = (X1[:, None, :] - X2[None, :, :]) / lengthscales
    return signal_variance * np.exp(-0.5 * (D ** 2).sum(axis=2))


def _profile_lml(Xs, y, lengthscales, signal_variance, nugget):
    """Log marginal likelihood with the constant mean profiled out.

    Returns ``(lml, mean, L, alpha)`` or ``None`` if the Cholesky fails.
    """
    n = y.shape[0]
    K = _sq_exp(Xs, Xs, lengthscales, signal_variance)
    K[np.diag_indices(n)] += nugget
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return None
    ones = np.ones(n)
    Kinv_1 = cho_solve((L, True), ones)
    Kinv_y = cho_solve((L, True), y)
    mu = float(ones @ Kinv_y / (ones @ Kinv_1))
    r = y - mu
    alpha = cho_solve((L, True), r)
    lml = -0.5 * r @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
    return float(lml), mu, L, alpha


class GaussianProcessSurface(RegressorMixin, BaseEstimator):
    """Constant-mean GP regression with an ARD squared-exponential kernel.

    Inputs are mapped affinely to ``[0, 1]`` per coordinate (from
    ``input_bounds`` or the training range) before the kernel is applied.
    Hyperparameters are chosen by maximizing the log marginal likelihood
    with Powell's method from one default start and ``n_restarts`` random
    starts in log space.

    Parameters
    ----------
    nugget : float or None
        Fixed nugget variance, or ``None`` to estimate it.
    n_restarts : int
    lengthscale_bounds : (float, float)
        In standardized input units.
    signal_variance_bounds, nugget_bounds : (float, float)
        Multiples of the target sample variance.
    input_bounds : array-like of shape (2, n_features), optional
    random_state : int
    """

    def __init__(self, nugget=None, n_restarts=8, lengthscale_bounds=(1e-2, 1e2),
                 signal_variance_bounds=(1e-6, 1e4), nugget_bounds=(1e-8, 1.0),
                 input_bounds=None, random_state=0):
        self.nugget = nugget
        self.n_restarts = n_restarts
        self.lengthscale_bounds = lengthscale_bounds
        self.signal_variance_bounds = signal_variance_bounds
        self.nugget_bounds = nugget_bounds
        self.input_bounds = input_bounds
        self.random_state = random_state

    def _standardize(self, X):
        return (X - self.x_lower_) / self.x_scale_

    def fit(self, X, y):
        X = check_matrix(X, min_samples=5)
        y = check_vector(y, "y", size=X.shape[0])
        if len(np.unique(X, axis=0)) != X.shape[0]:
            raise ValueError("training inputs must be distinct")
        n, d = X.shape
        if self.input_bounds is not None:
            lo, hi = np.asarray(self.input_bounds, dtype=float)
        else:
            lo, hi = X.min(axis=0), X.max(axis=0)
        span = hi - lo
        self.x_lower_ = lo
        self.x_scale_ = np.where(span > 0, span, 1.0)
        Xs = self._standardize(X)

        tv = float(y.var())
        if not tv > 0:
            tv = 1.0
        lb = [np.log(self.lengthscale_bounds[0])] * d + [np.log(self.signal_variance_bounds[0] * tv)]
        ub = [np.log(self.lengthscale_bounds[1])] * d + [np.log(self.signal_variance_bounds[1] * tv)]
        fit_nugget = self.nugget is None
        if fit_nugget:
            lb.append(np.log(self.nugget_bounds[0] * tv))
            ub.append(np.log(self.nugget_bounds[1] * tv))
        lb, ub = np.array(lb), np.array(ub)

        def unpack(v):
            ls = np.exp(v[:d])
            sv = np.exp(v[d])
            ng = np.exp(v[d + 1]) if fit_nugget else float(self.nugget)
            return ls, sv, ng

        def objective(v):
            res = _profile_lml(Xs, y, *unpack(v))
            return 1e25 if res is None else -res[0]

        start = np.concatenate([np.full(d, np.log(0.5)), [np.log(tv)]])
        if fit_nugget:
            start = np.append(start, np.log(1e-3 * tv))
        start = np.clip(start, lb, ub)
        rng = make_rng(self.random_state, "gp-restarts")
        starts = [start] + [rng.uniform(lb, ub) for _ in range(self.n_restarts)]

        self.init_lml_ = -objective(start)
        best = None
        for s in starts:
            res = minimize(objective, s, method="Powell", bounds=list(zip(lb, ub)),
                           options={"xtol": 1e-6, "ftol": 1e-10, "maxfev": 20000})
            cand = res.x if res.fun <= objective(s) else s
            val = objective(cand)
            if best is None or val < best[1]:
                best = (cand, val)
        if best[1] >= 1e25:
            raise ConditioningError(
                "covariance factorization failed at every optimizer candidate; "
                "raise the nugget floor")
        ls, sv, ng = unpack(best[0])
        self._set_state(X, y, ls, sv, ng)
        return self

    def _set_state(self, X, y, lengthscales, signal_variance, nugget):
        res = _profile_lml(self._standardize(X), y, lengthscales, signal_variance, nugget)
        if res is None:
            raise ConditioningError("covariance matrix is not positive definite")
        lml, mu, L, alpha = res
        self.X_train_, self.y_train_ = X, y
        self.lengthscales_ = np.asarray(lengthscales, dtype=float)
        self.signal_variance_ = float(signal_variance)
        self.nugget_ = float(nugget)
        self.mean_ = mu
        self.L_ = L
        self.alpha_ = alpha
        self.log_marginal_likelihood_value_ = lml
        self.n_features_in_ = X.shape[1]

    def log_marginal_likelihood(self):
        check_is_fitted(self, "L_")
        return self.log_marginal_likelihood_value_

    def predict(self, X, return_std=False, return_var=False):
        """Posterior mean of the latent surface; optionally its variance or sd."""
        check_is_fitted(self, "L_")
        X = check_matrix(X, n_features=self.n_features_in_)
        Ks = _sq_exp(self._standardize(X), self._standardize(self.X_train_),
                     self.lengthscales_, self.signal_variance_)
        mean = self.mean_ + Ks @ self.alpha_
        if not (return_std or return_var):
            return mean
        v = solve_triangular(self.L_, Ks.T, lower=True)
        var = np.clip(self.signal_variance_ - (v ** 2).sum(axis=0), 0.0, None)
        return mean, (np.sqrt(var) if return_std else var)

    def to_dict(self):
        check_is_fitted(self, "L_")
        return {
            "mean": self.mean_,
            "signal_variance": self.signal_variance_,
            "lengthscales": self.lengthscales_.tolist(),
            "nugget": self.nugget_,
            "input_lower": self.x_lower_.tolist(),
            "input_scale": self.x_scale_.tolist(),
            "training_inputs": self.X_train_.tolist(),
            "training_targets": self.y_train_.tolist(),
            "factorized_covariance": self.L_.tolist(),
            "log_marginal_likelihood": self.log_marginal_likelihood_value_,
        }

    @classmethod
    def from_dict(cls, d):
        gp = cls(nugget=d["nugget"])
        gp.x_lower_ = np.asarray(d["input_lower"], dtype=float)
        gp.x_scale_ = np.asarray(d["input_scale"], dtype=float)
        X = np.asarray(d["training_inputs"], dtype=float)
        y = np.asarray(d["training_targets"], dtype=float)
        gp.X_train_, gp.y_train_ = X, y
        gp.lengthscales_ = np.asarray(d["lengthscales"], dtype=float)
        gp.signal_variance_ = float(d["signal_variance"])
        gp.nugget_ = float(d["nugget"])
        gp.mean_ = float(d["mean"])
        gp.L_ = np.asarray(d["factorized_covariance"], dtype=float)
        gp.alpha_ = cho_solve((gp.L_, True), y - gp.mean_)
        gp.log_marginal_likelihood_value_ = float(d["log_marginal_likelihood"])
        gp.n_features_in_ = X.shape[1]
        return gp


def gp_train(inputs, targets, **params):
    return GaussianProcessSurface(**params).fit(inputs, targets)


def gp_predict(model, x):
    """Mean and latent variance at a single input vector."""
    m, v = model.predict(np.atleast_2d(x), return_var=True)
    return float(m[0]), float(v[0])


# --- joint positive draws ------------------------------------------------

@dataclass
class PredictiveDraws:
    theta: np.ndarray
    pairs: np.ndarray
    rejection_count: int


def _positive_normal_pairs(mean_a, var_a, mean_b, var_b, k, rng, probe=1000,
                           min_rate=1e-3):
    sd_a, sd_b = np.sqrt(var_a), np.sqrt(var_b)
    kept, rejected, total_kept = [], 0, 0
    batch = max(k, probe)
    first = True
    while total_kept < k:
        a = mean_a + sd_a * rng.standard_normal(batch)
        b = mean_b + sd_b * rng.standard_normal(batch)
        ok = (a > 0) & (b > 0)
        n_ok = int(ok.sum())
        if first and n_ok < min_rate * batch:
            raise SolverError(
                "positive-draw acceptance below 1e-3; the emulator is predicting "
                "non-positive Beta parameters (extrapolation?)",
                {"mean_a": mean_a, "var_a": var_a, "mean_b": mean_b, "var_b": var_b},
            )
        first = False
        take = min(n_ok, k - total_kept)
        if total_kept + take == k:
            # final batch: only proposals up to the k-th acceptance count
            consumed = np.flatnonzero(ok)[take - 1] + 1
            rejected += int(consumed - take)
        else:
            rejected += batch - n_ok
        idx = np.flatnonzero(ok)[:take]
        kept.append(np.column_stack([a[idx], b[idx]]))
        total_kept += take
    return np.vstack(kept), rejected


def predictive_ab_draws(model_a, model_b, theta, k, rng, include_nugget=False):
    """``k`` positive ``(a, b)`` pairs from the two independent GP predictives."""
    x = np.atleast_2d(np.asarray(theta, dtype=float))
    ma, va = model_a.predict(x, return_var=True)
    mb, vb = model_b.predict(x, return_var=True)
    va, vb = float(va[0]), float(vb[0])
    if include_nugget:
        va += model_a.nugget_
        vb += model_b.nugget_
    pairs, rej = _positive_normal_pairs(float(ma[0]), va, float(mb[0]), vb, int(k), rng)
    return PredictiveDraws(x[0], pairs, rej)


class BetaGPEmulator(BaseEstimator):
    """Emulates the Beta sampling distribution of pi across parameter space.

    ``fit(X, pi_samples)`` fits a Beta per training row then trains the two
    GP surfaces; ``predict`` returns the posterior-mean ``(a, b)`` and
    ``sample_ab`` the rejection-sampled joint draws.
    """

    def __init__(self, nugget=None, n_restarts=8, lengthscale_bounds=(1e-2, 1e2),
                 input_bounds=None, include_nugget=True, beta_method="moments",
                 random_state=0):
        self.nugget = nugget
        self.n_restarts = n_restarts
        self.lengthscale_bounds = lengthscale_bounds
        self.input_bounds = input_bounds
        self.include_nugget = include_nugget
        self.beta_method = beta_method
        self.random_state = random_state

    def _gp(self, label):
        return GaussianProcessSurface(
            nugget=self.nugget, n_restarts=self.n_restarts,
            lengthscale_bounds=self.lengthscale_bounds,
            input_bounds=self.input_bounds,
            random_state=derive_seed(self.random_state, "emulator", label))

    def fit(self, X, pi_samples):
        X = check_matrix(X, min_samples=5)
        if len(pi_samples) != X.shape[0]:
            raise ValueError("need one pi sample per training row")
        self.beta_fits_ = [fit_beta(s, self.beta_method) for s in pi_samples]
        A = np.array([f.a for f in self.beta_fits_])
        B = np.array([f.b for f in self.beta_fits_])
        return self.fit_ab(X, A, B)

    def fit_ab(self, X, a, b):
        X = check_matrix(X, min_samples=5)
        self.gp_a_ = self._gp(0).fit(X, a)
        self.gp_b_ = self._gp(1).fit(X, b)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_var=False):
        check_is_fitted(self, "gp_a_")
        ma, va = self.gp_a_.predict(X, return_var=True)
        mb, vb = self.gp_b_.predict(X, return_var=True)
        mean = np.column_stack([ma, mb])
        return (mean, np.column_stack([va, vb])) if return_var else mean

    def sample_ab(self, X, k, seed):
        """One :class:`PredictiveDraws` per row, row ``i`` on stream ``(seed, i)``."""
        check_is_fitted(self, "gp_a_")
        X = check_matrix(X, n_features=self.n_features_in_, min_samples=0)
        return [predictive_ab_draws(self.gp_a_, self.gp_b_, x, k,
                                    make_rng(seed, "predict", i), self.include_nugget)
                for i, x in enumerate(X)]

    def to_dict(self):
        check_is_fitted(self, "gp_a_")
        params = {k: (np.asarray(v).tolist() if isinstance(v, (tuple, list, np.ndarray)) else v)
                  for k, v in self.get_params().items()}
        return {"params": params,
                "gp_a": self.gp_a_.to_dict(), "gp_b": self.gp_b_.to_dict()}

    @classmethod
    def from_dict(cls, d):
        params = dict(d.get("params", {}))
        if params.get("lengthscale_bounds") is not None:
            params["lengthscale_bounds"] = tuple(params["lengthscale_bounds"])
        em = cls(**params)
        em.gp_a_ = GaussianProcessSurface.from_dict(d["gp_a"])
        em.gp_b_ = GaussianProcessSurface.from_dict(d["gp_b"])
        em.n_features_in_ = em.gp_a_.n_features_in_
        return em
