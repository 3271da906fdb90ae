"""Feature-space partitioning: mini-batch k-means and silhouette-based K selection.

The partition is fit on the combined labeled and unlabeled pool. Candidate
cluster counts are scored by the silhouette coefficient on a capped random
sample; the single-cluster model is kept when the best candidate does not
beat a moment-matched Gaussian reference by a margin (see ``select_k``).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from ._stats import seed_int as _seed_int
from ._validation import as_feature_vector, as_float_matrix, freeze
from .errors import ConfigurationError, ShapeError, UndefinedSilhouetteError

if TYPE_CHECKING:
    from .core import LabeledSet, UnlabeledSet

# Element budget for chunked distance computations.
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class PartitionModel:
    """Nearest-centroid partition of the feature space."""

    centroids: np.ndarray

    def __post_init__(self):
        c = as_float_matrix(self.centroids, name="centroids")
        if len(c) < 1:
            raise ConfigurationError("a partition needs at least one centroid")
        object.__setattr__(self, "centroids", freeze(c))

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    def assign(self, X) -> np.ndarray:
        """Index of the nearest centroid per row; ties go to the lowest index."""
        X = as_float_matrix(X, d=self.d)
        out = np.empty(len(X), dtype=np.int64)
        step = max(1, _CHUNK_ELEMENTS // max(self.k * self.d, 1))
        for i in range(0, len(X), step):
            block = X[i : i + step]
            # Exact symmetric form so that equidistant points tie exactly.
            d2 = ((block[:, None, :] - self.centroids[None, :, :]) ** 2).sum(axis=2)
            out[i : i + step] = np.argmin(d2, axis=1)
        return out


def assign(model: PartitionModel, x) -> int:
    """Cluster index of a single feature vector."""
    x = as_feature_vector(x, d=model.d)
    return int(model.assign(x[None, :])[0])


@dataclass(frozen=True)
class KMeansConfig:
    batch_size: int = 4096
    iterations: int = 100
    candidates: tuple = (1, 2, 4, 8)
    silhouette_sample_size: int = 25000
    init: str = "k-means++"
    polish_iterations: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if any(k < 1 for k in self.candidates) or not self.candidates:
            raise ConfigurationError("candidate cluster counts must be >= 1")


def _nearest(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    k, d = centers.shape
    out = np.empty(len(X), dtype=np.int64)
    step = max(1, _CHUNK_ELEMENTS // max(k * d, 1))
    for i in range(0, len(X), step):
        block = X[i : i + step]
        d2 = ((block[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        out[i : i + step] = np.argmin(d2, axis=1)
    return out


def _kmeans_pp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            j = rng.choice(n, p=d2 / total)
        else:
            j = rng.integers(n)
        centers[i] = X[j]
        d2 = np.minimum(d2, ((X - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans_objective(points, model: PartitionModel) -> float:
    """Mean squared distance to the nearest centroid."""
    X = as_float_matrix(points, d=model.d)
    labels = model.assign(X)
    return float(((X - model.centroids[labels]) ** 2).sum(axis=1).mean())


def fit_kmeans(points, k: int, config: KMeansConfig = KMeansConfig()) -> PartitionModel:
    """Mini-batch k-means followed by a short full-batch Lloyd polish.

    Initialization is k-means++ on a capped subsample. Clusters left empty by
    a Lloyd step are re-seeded with the point farthest from its assigned
    centroid. Deterministic given ``config.seed``.
    """
    X = as_float_matrix(points)
    n = len(X)
    if k < 1:
        raise ConfigurationError("k must be >= 1")
    if n < k:
        raise ConfigurationError(f"k-means with K={k} needs at least {k} points, got {n}")
    ss = np.random.SeedSequence(config.seed)
    rng_init, rng_batch = (np.random.default_rng(s) for s in ss.spawn(2))

    m = min(n, config.silhouette_sample_size)
    sub = X[rng_init.choice(n, size=m, replace=False)] if m < n else X
    if config.init == "k-means++":
        centers = _kmeans_pp(sub, k, rng_init)
    elif config.init == "random":
        centers = sub[rng_init.choice(len(sub), size=k, replace=False)].copy()
    else:
        raise ConfigurationError(f"unknown init scheme {config.init!r}")

    if n > config.batch_size:
        counts = np.zeros(k)
        for _ in range(config.iterations):
            batch = X[rng_batch.integers(0, n, size=config.batch_size)]
            lab = _nearest(batch, centers)
            for c in range(k):
                mask = lab == c
                hit = int(mask.sum())
                if hit == 0:
                    continue
                counts[c] += hit
                eta = hit / counts[c]
                centers[c] += eta * (batch[mask].mean(axis=0) - centers[c])

    prev = None
    for _ in range(config.polish_iterations):
        lab = _nearest(X, centers)
        if prev is not None and np.array_equal(lab, prev):
            break
        prev = lab
        empties = [c for c in range(k) if not (lab == c).any()]
        d2 = None
        if empties:
            d2 = ((X - centers[lab]) ** 2).sum(axis=1)
        new_centers = centers.copy()
        for c in range(k):
            mask = lab == c
            if mask.any():
                new_centers[c] = X[mask].mean(axis=0)
        for c in empties:
            j = int(np.argmax(d2))
            new_centers[c] = X[j]
            d2[j] = -1.0
        centers = new_centers
    return PartitionModel(centers)


def silhouette(points, model: PartitionModel) -> float:
    """Mean silhouette coefficient of ``points`` under the model's assignment.

    Per point: a is the mean distance to the other points of its cluster, b
    the smallest mean distance to another (non-empty) cluster, and the score
    is (b - a) / max(a, b). Points alone in their cluster score 0, as does
    the a == b == 0 degenerate case.
    """
    if model.k < 2:
        raise UndefinedSilhouetteError("silhouette is undefined for a single cluster")
    X = as_float_matrix(points, d=model.d)
    n = len(X)
    if n < 2:
        raise ConfigurationError("silhouette needs at least two points")
    lab = model.assign(X)
    counts = np.bincount(lab, minlength=model.k).astype(np.float64)
    if int((counts > 0).sum()) < 2:
        return 0.0

    onehot = np.zeros((n, model.k))
    onehot[np.arange(n), lab] = 1.0
    sums = np.empty((n, model.k))
    sq = (X**2).sum(axis=1)
    step = max(1, _CHUNK_ELEMENTS // max(n, 1))
    for i in range(0, n, step):
        block = slice(i, min(i + step, n))
        d2 = sq[block, None] + sq[None, :] - 2.0 * (X[block] @ X.T)
        np.maximum(d2, 0.0, out=d2)
        sums[block] = np.sqrt(d2) @ onehot

    own = counts[lab]
    a = np.zeros(n)
    multi = own > 1
    a[multi] = sums[np.arange(n), lab][multi] / (own[multi] - 1.0)

    mean_to = sums / np.where(counts > 0, counts, np.nan)[None, :]
    mean_to[np.arange(n), lab] = np.inf
    mean_to[:, counts == 0] = np.inf
    b = np.nanmin(np.where(np.isnan(mean_to), np.inf, mean_to), axis=1)

    denom = np.maximum(a, b)
    s = np.zeros(n)
    ok = multi & (denom > 0)
    s[ok] = (b[ok] - a[ok]) / denom[ok]
    return float(s.mean())


def _gaussian_reference_silhouette(
    sample: np.ndarray, k: int, config: KMeansConfig, ss: np.random.SeedSequence
) -> float:
    """Silhouette k-means attains on a moment-matched Gaussian sample.

    Serves as the no-structure baseline: splitting any single Gaussian yields
    a strictly positive silhouette, so an absolute threshold cannot detect
    the one-cluster case.
    """
    rng = np.random.default_rng(ss.spawn(1)[0])
    mu = sample.mean(axis=0)
    cov = np.atleast_2d(np.cov(sample.T, bias=True))
    d = sample.shape[1]
    cov = cov + 1e-12 * np.eye(d)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(cov)
        chol = v * np.sqrt(np.maximum(w, 0.0))
    ref = mu + rng.standard_normal(sample.shape) @ chol.T
    model = fit_kmeans(ref, k, replace(config, seed=_seed_int(ss)))
    return silhouette(ref, model)


def _select_k_points(X: np.ndarray, config: KMeansConfig, *, return_scores: bool = False):
    if len(X) == 0:
        raise ConfigurationError("cannot select K on an empty pool")
    candidates = sorted(set(int(k) for k in config.candidates))
    ss = np.random.SeedSequence(config.seed)
    ss_sample, ss_null, ss_fits = ss.spawn(3)
    rng_sample = np.random.default_rng(ss_sample)
    m = min(len(X), config.silhouette_sample_size)
    sample = X[rng_sample.choice(len(X), size=m, replace=False)] if m < len(X) else X

    scores: dict = {}
    best_k = None
    best_model = None
    best_score = -np.inf
    fit_seeds = ss_fits.spawn(len(candidates))
    for k, child in zip(candidates, fit_seeds):
        if k == 1:
            continue
        model = fit_kmeans(X, k, replace(config, seed=_seed_int(child)))
        score = silhouette(sample, model)
        scores[k] = score
        if score > best_score:
            best_score, best_k, best_model = score, k, model

    reference = None
    if best_k is not None and 1 in candidates:
        reference = _gaussian_reference_silhouette(sample, best_k, config, ss_null)
        scores["reference"] = reference
    if best_k is None or (1 in candidates and best_score - reference < 0.05):
        best_k = 1
        best_model = fit_kmeans(X, 1, replace(config, seed=_seed_int(fit_seeds[0])))
    scores["selected"] = best_k
    if return_scores:
        return best_model, scores
    return best_model


def select_k(
    labeled: "LabeledSet",
    unlabeled: "UnlabeledSet",
    config: KMeansConfig = KMeansConfig(),
    *,
    return_scores: bool = False,
):
    """Fit one model per candidate K and keep the silhouette argmax.

    Candidates above one are scored on a seeded sample capped at
    ``silhouette_sample_size``; ties go to the smallest K. The K = 1 model is
    returned when the best candidate's silhouette does not exceed the
    silhouette of a moment-matched Gaussian reference sample by at least
    0.05 (an absolute threshold cannot separate one Gaussian from two).
    """
    if labeled.d != unlabeled.d:
        raise ShapeError("labeled and unlabeled sets disagree on dimension")
    pool = np.vstack([labeled.X, unlabeled.X])
    return _select_k_points(pool, config, return_scores=return_scores)


class ClusterPartitioner(BaseEstimator, ClusterMixin):
    """Mini-batch k-means estimator with silhouette-based selection of K.

    With ``n_clusters`` set the cluster count is fixed; otherwise each value
    in ``candidates`` is fit and scored as in :func:`select_k`.
    """

    def __init__(
        self,
        n_clusters=None,
        candidates=(1, 2, 4, 8),
        batch_size=4096,
        iterations=100,
        silhouette_sample_size=25000,
        polish_iterations=10,
        random_state=0,
    ):
        self.n_clusters = n_clusters
        self.candidates = candidates
        self.batch_size = batch_size
        self.iterations = iterations
        self.silhouette_sample_size = silhouette_sample_size
        self.polish_iterations = polish_iterations
        self.random_state = random_state

    def _config(self) -> KMeansConfig:
        return KMeansConfig(
            batch_size=self.batch_size,
            iterations=self.iterations,
            candidates=tuple(self.candidates),
            silhouette_sample_size=self.silhouette_sample_size,
            polish_iterations=self.polish_iterations,
            seed=self.random_state,
        )

    def fit(self, X, y=None):
        X = as_float_matrix(X)
        config = self._config()
        if self.n_clusters is not None:
            self.model_ = fit_kmeans(X, int(self.n_clusters), config)
            self.silhouette_by_k_ = {}
        else:
            self.model_, self.silhouette_by_k_ = _select_k_points(
                X, config, return_scores=True
            )
        self.cluster_centers_ = self.model_.centroids
        self.n_clusters_ = self.model_.k
        self.labels_ = self.model_.assign(X)
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.assign(X)
