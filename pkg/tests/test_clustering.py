import numpy as np
import pytest

from tsarag.clustering import ClusterModel, elbow_select, kmeans_fit, silhouette
from tsarag.errors import InvalidK, RangeTooSmall, SingleCluster


def two_blob_columns(rng, n_points=60, dim=3, sep=10.0):
    half = n_points // 2
    a = rng.standard_normal((half, dim)) * 0.3
    b = rng.standard_normal((n_points - half, dim)) * 0.3 + sep
    return np.vstack([a, b])


def inertia_oracle(points, centroids, labels):
    total = 0.0
    for x, lab in zip(points, labels):
        diff = x - centroids[lab]
        total += float(diff @ diff)
    return total


def silhouette_oracle(points, labels):
    """O(T^2) definitional recomputation."""
    n = len(points)
    dist = np.array(
        [[np.linalg.norm(points[i] - points[j]) for j in range(n)] for i in range(n)]
    )
    uniq = sorted(set(labels))
    scores = []
    for i in range(n):
        same = [j for j in range(n) if labels[j] == labels[i] and j != i]
        if not same:
            scores.append(0.0)
            continue
        a = sum(dist[i][j] for j in same) / len(same)
        b = min(
            sum(dist[i][j] for j in range(n) if labels[j] == c)
            / sum(1 for j in range(n) if labels[j] == c)
            for c in uniq
            if c != labels[i]
        )
        denom = max(a, b)
        scores.append((b - a) / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


class TestKmeansFit:
    def test_separable_1d_points(self):
        cols = np.array([[0.0], [0.1], [10.0], [10.1]])
        model, labels = kmeans_fit(cols, 2, seed=0)
        assert labels[0] == labels[1]
        assert labels[2] == labels[3]
        assert labels[0] != labels[2]

    def test_k_equals_t_zero_inertia(self):
        rng = np.random.default_rng(1)
        cols = rng.standard_normal((6, 2))
        model, labels = kmeans_fit(cols, 6, seed=0)
        assert model.inertia == pytest.approx(0.0, abs=1e-18)
        assert sorted(labels) == list(range(6))

    def test_inertia_matches_recomputation(self):
        rng = np.random.default_rng(2)
        for seed in range(20):
            cols = rng.standard_normal((40, 3))
            model, labels = kmeans_fit(cols, 4, seed=seed)
            assert model.inertia == pytest.approx(
                inertia_oracle(cols, model.centroids, labels), abs=1e-9
            )

    def test_invalid_k(self):
        cols = np.zeros((5, 2))
        with pytest.raises(InvalidK):
            kmeans_fit(cols, 1, seed=0)
        with pytest.raises(InvalidK):
            kmeans_fit(cols, 6, seed=0)

    def test_assign_ties_to_lower_index(self):
        model = ClusterModel(
            centroids=np.array([[0.0, 0.0], [0.0, 0.0], [5.0, 5.0]]),
            n_clusters=3,
            inertia=0.0,
        )
        labels = model.assign(np.array([[0.0, 0.0], [5.0, 5.0]]))
        np.testing.assert_array_equal(labels, [0, 2])

    def test_label_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        cols = two_blob_columns(rng)
        model, labels = kmeans_fit(cols, 2, seed=5)
        perm = np.array([1, 0])
        permuted = ClusterModel(
            centroids=model.centroids[perm], n_clusters=2, inertia=model.inertia
        )
        np.testing.assert_array_equal(permuted.assign(cols), perm[labels])

    def test_seed_determinism(self):
        rng = np.random.default_rng(4)
        cols = rng.standard_normal((30, 2))
        m1, l1 = kmeans_fit(cols, 3, seed=42)
        m2, l2 = kmeans_fit(cols, 3, seed=42)
        np.testing.assert_array_equal(l1, l2)
        np.testing.assert_array_equal(m1.centroids, m2.centroids)


class TestSilhouette:
    def test_tight_far_clusters_score_high(self):
        cols = np.array([[0.0], [0.1], [10.0], [10.1]])
        _, labels = kmeans_fit(cols, 2, seed=0)
        assert silhouette(cols, labels) > 0.9

    def test_all_identical_points_contribute_zero(self):
        cols = np.zeros((6, 2))
        labels = np.array([0, 0, 0, 1, 1, 1])
        assert silhouette(cols, labels) == 0.0

    def test_matches_definitional_oracle(self):
        rng = np.random.default_rng(5)
        for seed in range(10):
            cols = rng.standard_normal((25, 3))
            _, labels = kmeans_fit(cols, 3, seed=seed)
            assert silhouette(cols, labels) == pytest.approx(
                silhouette_oracle(cols, labels), abs=1e-9
            )

    def test_range_bounds(self):
        rng = np.random.default_rng(6)
        for seed in range(10):
            cols = rng.standard_normal((20, 2))
            _, labels = kmeans_fit(cols, 4, seed=seed)
            assert -1.0 <= silhouette(cols, labels) <= 1.0

    def test_single_cluster_rejected(self):
        with pytest.raises(SingleCluster):
            silhouette(np.zeros((4, 1)), np.zeros(4, dtype=int))


class TestElbowSelect:
    def test_two_blobs_select_two(self):
        rng = np.random.default_rng(7)
        cols = two_blob_columns(rng, n_points=80)
        assert elbow_select(cols, range(2, 7), seed=0) == 2

    def test_inertia_non_increasing_on_blobs(self):
        rng = np.random.default_rng(8)
        cols = two_blob_columns(rng, n_points=60)
        inertias = []
        for k in range(2, 7):
            best = np.inf
            for sub in range(4):
                model, _ = kmeans_fit(cols, k, seed=100 + sub)
                best = min(best, model.inertia)
            inertias.append(best)
        diffs = np.diff(inertias)
        assert (diffs <= 1e-9).all()

    def test_small_range_rejected(self):
        cols = np.random.default_rng(9).standard_normal((20, 2))
        with pytest.raises(RangeTooSmall):
            elbow_select(cols, [2, 3], seed=0)
