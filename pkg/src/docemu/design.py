"""Space-filling designs over the risk simplex crossed with an odds-ratio grid."""
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import make_rng
from ._validation import check_matrix


@dataclass(frozen=True)
class ParamPoint:
    """One parameter setting: category (or baseline) risks and a true odds ratio.

    A single-entry ``p`` is the baseline event risk of the binary model; longer
    vectors are ordinal category risks and must sum to one.
    """

    p: tuple
    odds_ratio: float

    def __post_init__(self):
        p = tuple(float(v) for v in np.atleast_1d(self.p))
        if any(not (0.0 <= v <= 1.0) for v in p):
            raise ValueError(f"risks must lie in [0, 1], got {p}")
        if len(p) > 1 and abs(sum(p) - 1.0) > 1e-12:
            raise ValueError(f"category risks must sum to one, got {sum(p)!r}")
        if not self.odds_ratio > 0:
            raise ValueError("odds_ratio must be positive")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "odds_ratio", float(self.odds_ratio))

    def as_array(self):
        return np.array(self.p + (self.odds_ratio,))


@dataclass
class Design:
    points: list
    kind: str = "training"
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("training", "test"):
            raise ValueError("kind must be 'training' or 'test'")
        keys = [pt.p + (pt.odds_ratio,) for pt in self.points]
        if len(set(keys)) != len(keys):
            raise ValueError("design contains duplicate points")

    def __len__(self):
        return len(self.points)

    @property
    def n_risks(self):
        return len(self.points[0].p) if self.points else 0

    @property
    def columns(self):
        if not self.points and "columns" in self.provenance:
            return list(self.provenance["columns"])
        k = self.n_risks
        risk_cols = ["p0"] if k == 1 else [f"p{i + 1}" for i in range(k)]
        return risk_cols + ["or"]

    def to_array(self):
        """Rows of ``(p..., or)``; shape ``(len, n_risks + 1)``."""
        if not self.points:
            return np.empty((0, len(self.columns) if "columns" in self.provenance else 0))
        return np.vstack([pt.as_array() for pt in self.points])

    @classmethod
    def from_array(cls, X, kind="training", provenance=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        pts = [ParamPoint(tuple(row[:-1]), row[-1]) for row in X]
        return cls(pts, kind, dict(provenance or {}))


def _inertia(X, centers, labels):
    return float(((X - centers[labels]) ** 2).sum())


def _kmeanspp_init(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=d2 / total)
        centers[j] = X[idx]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _sq_dists(X, centers):
    return ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _lloyd(X, centers, max_iter, tol):
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centers)
        labels = d2.argmin(axis=1)
        history.append(_inertia(X, centers, labels))
        new = centers.copy()
        counts = np.bincount(labels, minlength=len(centers))
        for j in np.flatnonzero(counts):
            new[j] = X[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            # reseed from the points worst served by the current centers
            far = np.argsort(-d2[np.arange(len(X)), labels])
            new[empty] = X[far[:empty.size]]
        shift = np.abs(new - centers).max()
        centers = new
        if shift <= tol and not empty.size:
            break
    labels = _sq_dists(X, centers).argmin(axis=1)
    history.append(_inertia(X, centers, labels))
    return centers, labels, history


class CentroidDesign(ClusterMixin, BaseEstimator):
    """k-means on a covering sample; the centroids are the design points.

    Parameters
    ----------
    n_clusters : int
        Number of design points.
    n_init : int
        Restarts from independent k-means++ seeds; the lowest inertia wins.
    project_simplex : bool
        Renormalize the centroids so each row sums to one.
    random_state : int
        Master seed.

    Attributes
    ----------
    cluster_centers_ : ndarray of shape (n_clusters, n_features)
    raw_centers_ : ndarray
        Centroids before projection.
    labels_, inertia_, inertia_history_
    """

    def __init__(self, n_clusters=20, n_init=10, max_iter=300, tol=1e-10,
                 project_simplex=True, random_state=0):
        self.n_clusters = n_clusters
        self.n_init = n_init
        self.max_iter = max_iter
        self.tol = tol
        self.project_simplex = project_simplex
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_matrix(X)
        k = int(self.n_clusters)
        if not 1 <= k <= X.shape[0]:
            raise ValueError(f"need 1 <= n_clusters <= {X.shape[0]}, got {k}")
        best = None
        for restart in range(self.n_init):
            rng = make_rng(self.random_state, "kmeans", restart)
            init = _kmeanspp_init(X, k, rng)
            centers, labels, hist = _lloyd(X, init, self.max_iter, self.tol)
            if best is None or hist[-1] < best[2][-1]:
                best = (centers, labels, hist)
        centers, labels, hist = best
        self.raw_centers_ = centers
        self.labels_ = labels
        self.inertia_ = hist[-1]
        self.inertia_history_ = hist
        if self.project_simplex:
            centers = centers / centers.sum(axis=1, keepdims=True)
        self.cluster_centers_ = centers
        return self

    def predict(self, X):
        check_is_fitted(self, "raw_centers_")
        X = check_matrix(X, n_features=self.raw_centers_.shape[1])
        return _sq_dists(X, self.raw_centers_).argmin(axis=1)


def kmeans_centroids(points, k, seed=0, n_init=10, project_simplex=True):
    """Centroids of a k-means clustering of ``points`` (rows renormalized)."""
    model = CentroidDesign(k, n_init=n_init, project_simplex=project_simplex,
                           random_state=seed)
    return model.fit(points).cluster_centers_


def cross_with_or(centroids, or_values, kind="training", provenance=None):
    """Cartesian product of risk vectors and odds ratios, centroid-major."""
    C = np.atleast_2d(np.asarray(centroids, dtype=float))
    ors = np.atleast_1d(np.asarray(or_values, dtype=float))
    if C.size == 0 or ors.size == 0:
        raise ValueError("centroids and or_values must be nonempty")
    if np.any(ors <= 0):
        raise ValueError("odds ratios must be positive")
    pts = [ParamPoint(tuple(c), o) for c in C for o in ors]
    return Design(pts, kind, dict(provenance or {}))


def rect_grid(p0_range, or_range, n_p0, n_or):
    """Equally spaced ``(p0, OR)`` grid including the endpoints, p0-major."""
    if n_p0 < 2 or n_or < 2:
        raise ValueError("grid counts must be at least 2")
    (a, b), (c, d) = p0_range, or_range
    if not (a < b and c < d):
        raise ValueError("ranges must be increasing intervals")
    p0 = np.linspace(a, b, n_p0)
    ors = np.linspace(c, d, n_or)
    return [(float(x), float(y)) for x in p0 for y in ors]


def grid_design(p0_range, or_range, n_p0, n_or, kind="test"):
    pts = [ParamPoint((x,), y) for x, y in rect_grid(p0_range, or_range, n_p0, n_or)]
    return Design(pts, kind, {"p0_range": list(p0_range), "or_range": list(or_range),
                              "n_p0": n_p0, "n_or": n_or})


def or_grid(or_range, n):
    """``n`` equally spaced odds ratios spanning ``or_range``."""
    return np.linspace(or_range[0], or_range[1], n)
