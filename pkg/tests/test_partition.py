import numpy as np
import pytest

from groupshift.core import LabeledSet, UnlabeledSet
from groupshift.errors import (
    ConfigurationError,
    ShapeError,
    UndefinedSilhouetteError,
)
from groupshift.partition import (
    ClusterPartitioner,
    KMeansConfig,
    PartitionModel,
    assign,
    fit_kmeans,
    kmeans_objective,
    select_k,
    silhouette,
)

# Hand computation for points {0,1,9,10} split {0,1} | {9,10}:
# s(0) = s(10) = 8.5/9.5, s(1) = s(9) = 7.5/8.5, mean = 287/323.
FOUR_POINT_SILHOUETTE = 287.0 / 323.0

CFG = KMeansConfig(seed=0)


def blobs(centers, n_per, scale=0.3, seed=0):
    rng = np.random.default_rng(seed)
    parts = [c + scale * rng.standard_normal((n_per, len(c))) for c in np.atleast_2d(centers)]
    return np.vstack(parts)


class TestFitKmeans:
    def test_two_cluster_line(self):
        X = np.array([[0.0], [1.0], [9.0], [10.0]])
        model = fit_kmeans(X, 2, CFG)
        assert sorted(model.centroids[:, 0].tolist()) == [0.5, 9.5]

    def test_identical_points_k1(self):
        X = np.full((5, 2), 3.25)
        model = fit_kmeans(X, 1, CFG)
        assert np.array_equal(model.centroids, np.array([[3.25, 3.25]]))

    def test_k1_is_full_mean(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(500, 3))
        model = fit_kmeans(X, 1, CFG)
        np.testing.assert_allclose(model.centroids[0], X.mean(axis=0), rtol=0, atol=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ConfigurationError):
            fit_kmeans(np.zeros((1, 2)), 2, CFG)

    def test_deterministic(self):
        X = blobs([[0, 0], [5, 5]], 200, seed=3)
        a = fit_kmeans(X, 2, KMeansConfig(seed=11))
        b = fit_kmeans(X, 2, KMeansConfig(seed=11))
        assert np.array_equal(a.centroids, b.centroids)

    def test_objective_non_increasing_over_polish(self):
        X = blobs([[0, 0], [4, 0], [0, 4]], 300, seed=5)
        objs = []
        for p in range(1, 6):
            model = fit_kmeans(X, 3, KMeansConfig(seed=2, polish_iterations=p))
            objs.append(kmeans_objective(X, model))
        for earlier, later in zip(objs, objs[1:]):
            assert later <= earlier + 1e-12


class TestAssign:
    model = PartitionModel(np.array([[0.5], [9.5]]))

    def test_nearest(self):
        assert assign(self.model, np.array([2.0])) == 0
        assert assign(self.model, np.array([8.0])) == 1

    def test_tie_breaks_low_index(self):
        assert assign(self.model, np.array([5.0])) == 0

    def test_k1_always_zero(self):
        model = PartitionModel(np.array([[7.0]]))
        assert assign(model, np.array([-100.0])) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            assign(self.model, np.array([1.0, 2.0]))

    def test_stable_and_permutation_equivariant(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 1))
        first = self.model.assign(X)
        assert np.array_equal(first, self.model.assign(X))
        swapped = PartitionModel(self.model.centroids[::-1].copy())
        # A tie at the midpoint would break equivariance; keep points off 5.0.
        assert np.array_equal(swapped.assign(X), 1 - first)


class TestSilhouette:
    def test_hand_computed_value(self):
        model = PartitionModel(np.array([[0.5], [9.5]]))
        X = np.array([[0.0], [1.0], [9.0], [10.0]])
        assert silhouette(X, model) == pytest.approx(FOUR_POINT_SILHOUETTE, abs=1e-12)

    def test_far_tight_blobs_near_one(self):
        model = PartitionModel(np.array([[0.0, 0.0], [100.0, 0.0]]))
        X = np.vstack(
            [blobs([[0, 0]], 50, scale=0.01, seed=1), blobs([[100, 0]], 50, scale=0.01, seed=2)]
        )
        assert silhouette(X, model) > 0.99

    def test_degenerate_identical_points(self):
        model = PartitionModel(np.array([[0.0], [1.0]]))
        X = np.zeros((6, 1))
        assert silhouette(X, model) == 0.0

    def test_k1_undefined(self):
        model = PartitionModel(np.array([[0.0]]))
        with pytest.raises(UndefinedSilhouetteError):
            silhouette(np.zeros((3, 1)), model)

    def test_range(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(200, 2))
        model = fit_kmeans(X, 3, CFG)
        assert -1.0 <= silhouette(X, model) <= 1.0


class TestSelectK:
    def test_recovers_four_blobs(self):
        centers = [[0, 0], [12, 0], [0, 12], [12, 12]]
        X = blobs(centers, 150, scale=0.5, seed=6)
        labeled = LabeledSet(X[:300], np.repeat([0, 1], 150), np.tile([0, 1], 150))
        unlabeled = UnlabeledSet(X[300:], np.repeat([0, 1], 150))
        model = select_k(labeled, unlabeled, KMeansConfig(seed=0))
        assert model.k == 4

    def test_single_gaussian_selects_one(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((1200, 2))
        labeled = LabeledSet(X[:600], np.repeat([0, 1], 300), np.tile([0, 1], 300))
        unlabeled = UnlabeledSet(X[600:], np.repeat([0, 1], 300))
        model, scores = select_k(labeled, unlabeled, KMeansConfig(seed=0), return_scores=True)
        assert model.k == 1
        assert scores["selected"] == 1

    def test_tie_prefers_smaller_k(self):
        # Two point masses give silhouette exactly 1.0 for both K=2 and K=4.
        X = np.vstack([np.zeros((20, 2)), np.full((20, 2), 10.0)])
        labeled = LabeledSet(X[:20], np.repeat([0, 1], 10), np.tile([0, 1], 10))
        unlabeled = UnlabeledSet(X[20:], np.repeat([0, 1], 10))
        model, scores = select_k(
            labeled,
            unlabeled,
            KMeansConfig(seed=0, candidates=(2, 4)),
            return_scores=True,
        )
        assert scores[2] == scores[4] == 1.0
        assert model.k == 2


class TestClusterPartitioner:
    def test_sklearn_roundtrip(self):
        from sklearn.base import clone

        est = ClusterPartitioner(n_clusters=2, random_state=1)
        params = est.get_params()
        assert params["n_clusters"] == 2
        cloned = clone(est)
        X = blobs([[0, 0], [8, 8]], 100, seed=2)
        labels = cloned.fit(X).labels_
        assert set(np.unique(labels)) == {0, 1}
        assert cloned.n_clusters_ == 2
        assert np.array_equal(cloned.predict(X), labels)

    def test_auto_selection(self):
        X = blobs([[0, 0], [15, 0]], 300, scale=0.4, seed=3)
        est = ClusterPartitioner(candidates=(1, 2, 4), random_state=0).fit(X)
        assert est.n_clusters_ == 2
        assert 2 in est.silhouette_by_k_


class TestSelectKRecovery:
    """Empirical K recovery on synthetic data with the separation rule enforced."""

    def run_recovery(self, true_k, d, seeds):
        from groupshift.synthgen import SyntheticConfig, generate

        hits = 0
        for seed in seeds:
            cfg = SyntheticConfig(
                d=d,
                k=true_k,
                groups=4,
                setting=2,
                labeled_size=(150.0, 15.0),
                unlabeled_size=(300.0, 30.0),
                seed=seed,
            )
            labeled, unlabeled, _ = generate(cfg)
            model = select_k(labeled, unlabeled, KMeansConfig(seed=seed))
            hits += int(model.k == true_k)
        return hits

    @pytest.mark.parametrize("true_k", [1, 4])
    @pytest.mark.parametrize("d", [2, 4])
    def test_recovers_generating_k(self, true_k, d):
        hits = self.run_recovery(true_k, d, seeds=range(10))
        assert hits >= 8, f"recovered K={true_k} at d={d} in only {hits}/10 runs"
