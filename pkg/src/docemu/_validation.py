"""Input validation helpers shared by the estimators and functions."""
import numpy as np
from sklearn.utils.validation import check_array


class DegeneracyError(ArithmeticError):
    """Raised when weights or samples carry no usable information."""


class SolverError(ArithmeticError):
    """Raised when a numerical solver cannot bracket or converge.

    ``diagnostics`` holds whatever the solver knew at the point of failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConditioningError(np.linalg.LinAlgError):
    """Raised when a covariance matrix cannot be factorized."""


def check_vector(x, name="x", size=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {x.shape}")
    if size is not None and x.shape[0] != size:
        raise ValueError(f"{name} must have {size} entries, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


def check_matrix(X, n_features=None, name="X", min_samples=1):
    X = check_array(X, dtype=float, ensure_min_samples=min_samples,
                    input_name=name)
    if n_features is not None and X.shape[1] != n_features:
        raise ValueError(f"{name} must have {n_features} columns, got {X.shape[1]}")
    return X


def check_probability(u, name="threshold", open_interval=True):
    u = float(u)
    ok = 0.0 < u < 1.0 if open_interval else 0.0 <= u <= 1.0
    if not ok or not np.isfinite(u):
        raise ValueError(f"{name} must lie in (0, 1), got {u}")
    return u
