import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from docemu.design import (CentroidDesign, Design, ParamPoint, cross_with_or, grid_design,
                           kmeans_centroids, or_grid, rect_grid)


def _blobs(rng, centers, n=60, sd=0.01):
    return np.vstack([c + sd * rng.standard_normal((n, len(c))) for c in centers])


class TestParamPoint:
    def test_binary(self):
        pt = ParamPoint((0.3,), 0.8)
        np.testing.assert_array_equal(pt.as_array(), [0.3, 0.8])

    def test_ordinal_sum(self):
        with pytest.raises(ValueError):
            ParamPoint((0.5, 0.3, 0.1, 0.05), 1.0)

    def test_bad_or(self):
        with pytest.raises(ValueError):
            ParamPoint((0.3,), 0.0)


class TestDesign:
    def test_duplicates_rejected(self):
        pts = [ParamPoint((0.3,), 0.8), ParamPoint((0.3,), 0.8)]
        with pytest.raises(ValueError):
            Design(pts)

    def test_columns(self):
        assert grid_design((0.2, 0.4), (0.6, 1), 2, 2).columns == ["p0", "or"]
        d = cross_with_or(np.array([[0.7, 0.2, 0.06, 0.04]]), [0.8, 1.0])
        assert d.columns == ["p1", "p2", "p3", "p4", "or"]

    def test_array_roundtrip(self):
        d = grid_design((0.25, 0.7), (0.6, 1.0), 3, 4)
        back = Design.from_array(d.to_array(), "test")
        np.testing.assert_array_equal(back.to_array(), d.to_array())


class TestGrids:
    def test_rect_grid_inclusive_p0_major(self):
        g = np.asarray(rect_grid((0.25, 0.7), (0.6, 1.0), 10, 10))
        assert g.shape == (100, 2)
        assert g[0].tolist() == [0.25, 0.6]
        assert g[-1].tolist() == [0.7, 1.0]
        assert np.all(g[:10, 0] == 0.25)

    def test_or_grid(self):
        np.testing.assert_allclose(or_grid((0.7, 1.0), 4), [0.7, 0.8, 0.9, 1.0])

    def test_cross_centroid_major(self):
        C = np.array([[0.7, 0.2, 0.06, 0.04], [0.6, 0.3, 0.06, 0.04]])
        d = cross_with_or(C, [0.7, 0.8, 0.9, 1.0])
        assert len(d) == 8
        X = d.to_array()
        np.testing.assert_array_equal(X[:4, :4], np.repeat(C[:1], 4, axis=0))
        np.testing.assert_array_equal(X[:4, 4], [0.7, 0.8, 0.9, 1.0])


class TestCentroidDesign:
    def test_recovers_separated_blobs(self, rng):
        centers = np.array([[0.7, 0.2, 0.05, 0.05], [0.5, 0.4, 0.05, 0.05],
                            [0.6, 0.2, 0.1, 0.1]])
        X = _blobs(rng, centers)
        km = CentroidDesign(3, project_simplex=False, random_state=1).fit(X)
        got = km.cluster_centers_[np.lexsort(km.cluster_centers_.T[::-1])]
        ref = centers[np.lexsort(centers.T[::-1])]
        np.testing.assert_allclose(got, ref, atol=5e-3)

    def test_matches_sklearn_inertia(self, rng):
        from sklearn.cluster import KMeans
        X = rng.dirichlet(np.ones(4), 400)
        ours = CentroidDesign(8, project_simplex=False, random_state=0).fit(X).inertia_
        ref = KMeans(8, n_init=10, random_state=0).fit(X).inertia_
        assert ours <= ref * 1.02

    def test_inertia_history_nonincreasing(self, rng):
        X = rng.dirichlet(np.ones(4), 300)
        km = CentroidDesign(6, random_state=2).fit(X)
        h = np.asarray(km.inertia_history_)
        assert np.all(np.diff(h) <= 1e-12 * h[0])

    def test_projected_centroids_sum_to_one(self, rng):
        X = rng.dirichlet(np.ones(4), 300)
        C = kmeans_centroids(X, 20, seed=3)
        assert C.shape == (20, 4)
        np.testing.assert_allclose(C.sum(axis=1), 1.0, atol=1e-12)

    def test_deterministic_and_sklearn_compatible(self, rng):
        X = rng.random((100, 2))
        km = CentroidDesign(5, random_state=4, project_simplex=False)
        a = km.fit(X).cluster_centers_
        b = clone(km).fit(X).cluster_centers_
        np.testing.assert_array_equal(a, b)
        assert km.get_params()["n_clusters"] == 5
        assert set(km.predict(X)) <= set(range(5))

    def test_too_many_clusters(self, rng):
        with pytest.raises(ValueError):
            CentroidDesign(20).fit(rng.random((10, 2)))

    @settings(max_examples=20, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 1000))
    def test_labels_are_nearest_centroid(self, k, seed):
        X = np.random.default_rng(seed).random((40, 2))
        km = CentroidDesign(k, n_init=2, project_simplex=False, random_state=seed).fit(X)
        d = ((X[:, None, :] - km.cluster_centers_[None]) ** 2).sum(axis=2)
        np.testing.assert_allclose(d[np.arange(40), km.labels_], d.min(axis=1), atol=1e-12)
