"""Synthetic Gaussian-mixture data and biased resampling of real labeled pools.

Each cluster gets a pair of Gaussian components (positive/negative) whose
overlap is calibrated by Monte-Carlo bisection to a Bayes AUC drawn from the
configured range; pairs of different clusters are kept apart by a Mahalanobis
separation constraint. Setting 1 shares mixing weights and class priors
across groups and splits; setting 2 draws them per group and per split while
keeping the per-cluster class-conditionals shared (the invariance the
pipeline assumes).

Group data is generated from one child RNG stream per group (spawned from the
master seed), so groups could be generated concurrently and merged in group
order without changing the output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp

from ._stats import rank_auc, seed_int
from ._validation import as_float_matrix, freeze
from .core import LabeledSet, UnlabeledSet
from .errors import ConfigurationError, GenerationError
from .partition import PartitionModel

logger = logging.getLogger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)

#: Minimum Mahalanobis distance (under the average covariance) between
#: components of different clusters.
SEPARATION = 6.0
#: Center placement attempts per cluster before giving up.
PLACEMENT_BUDGET = 1000


@dataclass(frozen=True)
class GaussianComponent:
    """Multivariate normal stored with its lower-triangular Cholesky factor."""

    mean: np.ndarray
    covariance: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", freeze(np.asarray(self.mean, np.float64)))
        object.__setattr__(self, "covariance", freeze(np.asarray(self.covariance, np.float64)))
        object.__setattr__(self, "chol", freeze(np.asarray(self.chol, np.float64)))

    @classmethod
    def from_covariance(cls, mean, covariance) -> "GaussianComponent":
        mean = np.asarray(mean, np.float64)
        covariance = np.asarray(covariance, np.float64)
        covariance = 0.5 * (covariance + covariance.T)
        chol = np.linalg.cholesky(covariance)
        return cls(mean, covariance, chol)

    @property
    def d(self) -> int:
        return self.mean.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.mean + rng.standard_normal((n, self.d)) @ self.chol.T

    def log_density(self, X) -> np.ndarray:
        X = as_float_matrix(X, d=self.d)
        diff = (X - self.mean).T
        sol = np.linalg.solve(self.chol, diff)
        quad = (sol**2).sum(axis=0)
        half_logdet = float(np.log(np.diag(self.chol)).sum())
        return -0.5 * (quad + self.d * _LOG_2PI) - half_logdet


@dataclass(frozen=True)
class ClusterComponentPair:
    """Positive/negative component pair of one cluster."""

    positive: GaussianComponent
    negative: GaussianComponent
    bayes_auc: float

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.positive.mean + self.negative.mean)

    def log_likelihood_ratio(self, X) -> np.ndarray:
        return self.positive.log_density(X) - self.negative.log_density(X)


def pair_bayes_auc(pair: ClusterComponentPair, n_samples: int, seed: int) -> float:
    """Monte-Carlo AUC of the likelihood-ratio scorer between the pair."""
    rng = np.random.default_rng(seed)
    half = n_samples // 2
    pos = pair.positive.sample(half, rng)
    neg = pair.negative.sample(half, rng)
    scores = np.concatenate([pair.log_likelihood_ratio(pos), pair.log_likelihood_ratio(neg)])
    labels = np.repeat([1, 0], half)
    return rank_auc(scores, labels)


def _mc_auc(mean_pos, chol_pos, mean_neg, chol_neg, z_pos, z_neg):
    pos = GaussianComponent(mean_pos, chol_pos @ chol_pos.T, chol_pos)
    neg = GaussianComponent(mean_neg, chol_neg @ chol_neg.T, chol_neg)
    x_pos = mean_pos + z_pos @ chol_pos.T
    x_neg = mean_neg + z_neg @ chol_neg.T
    s = np.concatenate(
        [
            pos.log_density(x_pos) - neg.log_density(x_pos),
            pos.log_density(x_neg) - neg.log_density(x_neg),
        ]
    )
    labels = np.repeat([1, 0], len(z_pos))
    return rank_auc(s, labels)


def _covariance_pair(d: int, rng: np.random.Generator, rho: float = 0.98):
    """Two covariances Sigma = A A^T + 0.1 I with A entries N(0, 1/d).

    The two factors are drawn correlated (identical marginal law) so that the
    pair's shapes stay similar; otherwise at d >= 4 the covariance difference
    alone would push the likelihood-ratio AUC past low targets and the
    mean-offset bisection could not land them.
    """
    base = rng.standard_normal((d, d))
    out = []
    for _ in range(2):
        noise = rng.standard_normal((d, d))
        a = (rho * base + math.sqrt(1.0 - rho**2) * noise) / math.sqrt(d)
        out.append(a @ a.T + 0.1 * np.eye(d))
    return out


def _calibrated_shape(d, target, rng, mc_draws=20000, tol=0.005):
    """Covariances, offset direction, and offset size hitting the target AUC.

    Uses common random numbers so the Monte-Carlo AUC is a deterministic,
    effectively monotone function of the offset, then bisects.
    """
    half = mc_draws // 2
    for _ in range(100):
        cov_pos, cov_neg = _covariance_pair(d, rng)
        chol_pos = np.linalg.cholesky(cov_pos)
        chol_neg = np.linalg.cholesky(cov_neg)
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        z_pos = rng.standard_normal((half, d))
        z_neg = rng.standard_normal((half, d))

        def auc_at(delta):
            return _mc_auc(
                0.5 * delta * u, chol_pos, -0.5 * delta * u, chol_neg, z_pos, z_neg
            )

        if auc_at(0.0) > target + tol:
            continue  # covariance shapes alone separate too much; redraw
        hi = 1.0
        while auc_at(hi) < target and hi < 2**16:
            hi *= 2.0
        lo = 0.0
        delta = hi
        for _ in range(60):
            delta = 0.5 * (lo + hi)
            got = auc_at(delta)
            if abs(got - target) <= tol:
                return cov_pos, cov_neg, u, delta, got
            if got < target:
                lo = delta
            else:
                hi = delta
        got = auc_at(delta)
        if abs(got - target) <= 2 * tol:
            return cov_pos, cov_neg, u, delta, got
    raise GenerationError("could not calibrate a component pair to the target AUC")


def _mahalanobis_sq(diff, cov) -> float:
    return float(diff @ np.linalg.solve(cov, diff))


def sample_component_pairs(
    d: int,
    k: int,
    auc_range: tuple = (0.75, 0.95),
    seed: int = 0,
    *,
    separation: float = SEPARATION,
    max_attempts: int = PLACEMENT_BUDGET,
) -> list:
    """Draw K component pairs with calibrated within-cluster Bayes AUC.

    Each pair's target AUC is drawn uniformly from ``auc_range`` and matched
    by bisection on the mean offset (Monte-Carlo likelihood-ratio AUC).
    Cluster centers are rejection-sampled until every cross-cluster component
    distance is at least ``separation`` Mahalanobis units under the averaged
    covariance; after every 100 failed placements the candidate pair is
    shrunk by 0.9 (covariance scale), which preserves its AUC exactly.
    """
    if d < 1 or k < 1:
        raise ConfigurationError("d and k must be >= 1")
    root = np.random.SeedSequence(seed)
    radius = 2.0 * separation * k ** (1.0 / d)
    placed: list[GaussianComponent] = []
    pairs: list[ClusterComponentPair] = []
    for child in root.spawn(k):
        rng = np.random.default_rng(child)
        target = rng.uniform(*auc_range)
        cov_pos, cov_neg, u, delta, got = _calibrated_shape(d, target, rng)
        shrink = 1.0
        for attempt in range(1, max_attempts + 1):
            # Shrinking covariance by 0.9 and offsets by sqrt(0.9) rescales
            # the pair geometry, leaving the likelihood-ratio AUC unchanged.
            if attempt % 100 == 0:
                shrink *= 0.9
            scale = math.sqrt(shrink)
            center = rng.uniform(-radius, radius, d)
            mean_pos = center + 0.5 * scale * delta * u
            mean_neg = center - 0.5 * scale * delta * u
            cands = [(mean_pos, shrink * cov_pos), (mean_neg, shrink * cov_neg)]
            ok = True
            for mean_c, cov_c in cands:
                for other in placed:
                    avg = 0.5 * (cov_c + other.covariance)
                    if _mahalanobis_sq(mean_c - other.mean, avg) < separation**2:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                pair = ClusterComponentPair(
                    GaussianComponent.from_covariance(mean_pos, shrink * cov_pos),
                    GaussianComponent.from_covariance(mean_neg, shrink * cov_neg),
                    float(got),
                )
                pairs.append(pair)
                placed.extend([pair.positive, pair.negative])
                break
        else:
            raise GenerationError(
                f"failed to place non-overlapping component pairs within "
                f"{max_attempts} attempts per cluster"
            )
    return pairs


@dataclass(frozen=True)
class SyntheticConfig:
    d: int
    k: int
    groups: int = 100
    setting: int = 2
    labeled_size: tuple = (1000.0, 100.0)
    unlabeled_size: tuple = (10000.0, 1000.0)
    dirichlet_concentration: float = 2.0
    alpha_range: tuple = (0.01, 0.99)
    auc_range: tuple = (0.75, 0.95)
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.k < 1 or self.groups < 1:
            raise ConfigurationError("d, k, and groups must all be >= 1")
        if self.setting not in (1, 2):
            raise ConfigurationError("setting must be 1 or 2")
        lo, hi = self.alpha_range
        if not (0.0 < lo < hi < 1.0):
            raise ConfigurationError("alpha_range must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class GroundTruth:
    """Everything the generator knows about an emitted dataset.

    The four (G, K) tables hold per-group cluster mixing weights and
    positive-class priors for the labeled and unlabeled sides; in setting 1
    all rows (and the two sides) are identical. ``components`` is None for
    resampled real pools. Source index arrays map emitted examples back to
    pool rows and are None for purely synthetic data.
    """

    components: tuple | None
    group_ids: np.ndarray
    labeled_weights: np.ndarray
    labeled_priors: np.ndarray
    unlabeled_weights: np.ndarray
    unlabeled_priors: np.ndarray
    labeled_clusters: np.ndarray
    unlabeled_clusters: np.ndarray
    unlabeled_labels: np.ndarray
    labeled_source: np.ndarray | None
    unlabeled_source: np.ndarray | None
    setting: int

    def group_row(self, g: int) -> int:
        rows = np.flatnonzero(self.group_ids == g)
        if len(rows) == 0:
            raise KeyError(f"group {g} not present in ground truth")
        return int(rows[0])


def mixture_cell_counts(weight: float, prior: float, size: int) -> tuple:
    """Positive/negative counts round(weight * prior * size) (half-to-even)."""
    pos = int(np.rint(weight * prior * size))
    neg = int(np.rint(weight * (1.0 - prior) * size))
    return pos, neg


def _positive_size(rng: np.random.Generator, mean: float, sd: float, floor: int) -> int:
    # Non-positive draws are re-drawn; the result is clamped to >= floor so
    # every cluster can be populated.
    while True:
        size = int(np.rint(rng.normal(mean, sd)))
        if size >= 1:
            return max(size, floor)


def generate(config: SyntheticConfig):
    """Generate (LabeledSet, UnlabeledSet, GroundTruth) under the config.

    Group sizes are drawn from the configured normal distributions; per-group
    per-cluster positive/negative counts follow round(weight * prior * size).
    Every example is sampled from its cluster's positive or negative
    component. Byte-identical for identical configs.
    """
    root = np.random.SeedSequence(config.seed)
    ss_pairs, ss_params, ss_groups = root.spawn(3)
    pairs = sample_component_pairs(
        config.d, config.k, config.auc_range, seed=seed_int(ss_pairs)
    )
    G, K = config.groups, config.k
    if config.setting == 1:
        rng = np.random.default_rng(ss_params)
        gamma = rng.dirichlet([config.dirichlet_concentration] * K)
        alpha = rng.uniform(*config.alpha_range, K)
        lab_w = np.tile(gamma, (G, 1))
        lab_p = np.tile(alpha, (G, 1))
        unl_w, unl_p = lab_w.copy(), lab_p.copy()
    else:
        lab_w = np.empty((G, K))
        lab_p = np.empty((G, K))
        unl_w = np.empty((G, K))
        unl_p = np.empty((G, K))

    lab_X, lab_g, lab_y, lab_k = [], [], [], []
    unl_X, unl_g, unl_y, unl_k = [], [], [], []
    for g, child in enumerate(ss_groups.spawn(G)):
        rng = np.random.default_rng(child)
        n_lab = _positive_size(rng, *config.labeled_size, floor=K)
        n_unl = _positive_size(rng, *config.unlabeled_size, floor=K)
        if config.setting == 2:
            lab_w[g] = rng.dirichlet([config.dirichlet_concentration] * K)
            unl_w[g] = rng.dirichlet([config.dirichlet_concentration] * K)
            lab_p[g] = rng.uniform(*config.alpha_range, K)
            unl_p[g] = rng.uniform(*config.alpha_range, K)
        for k in range(K):
            for side, weights, priors, size in (
                ("labeled", lab_w[g], lab_p[g], n_lab),
                ("unlabeled", unl_w[g], unl_p[g], n_unl),
            ):
                n_pos, n_neg = mixture_cell_counts(weights[k], priors[k], size)
                pos = pairs[k].positive.sample(n_pos, rng)
                neg = pairs[k].negative.sample(n_neg, rng)
                X = np.vstack([pos, neg])
                y = np.repeat([1, 0], [n_pos, n_neg])
                if side == "labeled":
                    lab_X.append(X)
                    lab_g.append(np.full(len(X), g))
                    lab_y.append(y)
                    lab_k.append(np.full(len(X), k))
                else:
                    unl_X.append(X)
                    unl_g.append(np.full(len(X), g))
                    unl_y.append(y)
                    unl_k.append(np.full(len(X), k))

    labeled = LabeledSet(
        np.vstack(lab_X), np.concatenate(lab_g), np.concatenate(lab_y)
    )
    unlabeled = UnlabeledSet(np.vstack(unl_X), np.concatenate(unl_g))
    truth = GroundTruth(
        components=tuple(pairs),
        group_ids=np.arange(G, dtype=np.int64),
        labeled_weights=lab_w,
        labeled_priors=lab_p,
        unlabeled_weights=unl_w,
        unlabeled_priors=unl_p,
        labeled_clusters=np.concatenate(lab_k).astype(np.int64),
        unlabeled_clusters=np.concatenate(unl_k).astype(np.int64),
        unlabeled_labels=np.concatenate(unl_y).astype(np.int64),
        labeled_source=None,
        unlabeled_source=None,
        setting=config.setting,
    )
    return labeled, unlabeled, truth


def resample_pool(
    pool: LabeledSet,
    partition: PartitionModel,
    setting: int = 2,
    dirichlet_concentration: float = 2.0,
    alpha_range: tuple = (0.01, 0.99),
    seed: int = 0,
):
    """Resample a labeled pool into biased labeled/unlabeled sets.

    Each group's pool rows are first halved uniformly at random; target
    counts (computed exactly as in :func:`generate`, against the half sizes)
    are then drawn with replacement from the matching (cluster, class)
    stratum of the corresponding half. Strata with no available examples
    contribute nothing; the deficit is logged.
    """
    if len(pool) == 0:
        raise ConfigurationError("pool is empty")
    if setting not in (1, 2):
        raise ConfigurationError("setting must be 1 or 2")
    root = np.random.SeedSequence(seed)
    ss_params, ss_groups = root.spawn(2)
    clusters = partition.assign(pool.X)
    K = partition.k
    group_ids = np.unique(pool.g)
    G = len(group_ids)
    if setting == 1:
        rng = np.random.default_rng(ss_params)
        gamma = rng.dirichlet([dirichlet_concentration] * K)
        alpha = rng.uniform(*alpha_range, K)
        lab_w = np.tile(gamma, (G, 1))
        lab_p = np.tile(alpha, (G, 1))
        unl_w, unl_p = lab_w.copy(), lab_p.copy()
    else:
        lab_w = np.empty((G, K))
        lab_p = np.empty((G, K))
        unl_w = np.empty((G, K))
        unl_p = np.empty((G, K))

    lab_rows, unl_rows = [], []
    for gi, child in enumerate(ss_groups.spawn(G)):
        rng = np.random.default_rng(child)
        g = group_ids[gi]
        rows = np.flatnonzero(pool.g == g)
        perm = rng.permutation(rows)
        half = len(rows) // 2
        halves = {"labeled": perm[:half], "unlabeled": perm[half:]}
        if setting == 2:
            lab_w[gi] = rng.dirichlet([dirichlet_concentration] * K)
            unl_w[gi] = rng.dirichlet([dirichlet_concentration] * K)
            lab_p[gi] = rng.uniform(*alpha_range, K)
            unl_p[gi] = rng.uniform(*alpha_range, K)
        for k in range(K):
            for side, weights, priors in (
                ("labeled", lab_w[gi], lab_p[gi]),
                ("unlabeled", unl_w[gi], unl_p[gi]),
            ):
                source = halves[side]
                size = len(source)
                n_pos, n_neg = mixture_cell_counts(weights[k], priors[k], size)
                in_cluster = source[clusters[source] == k]
                for label, want in ((1, n_pos), (0, n_neg)):
                    stratum = in_cluster[pool.y[in_cluster] == label]
                    if want == 0:
                        continue
                    if len(stratum) == 0:
                        logger.warning(
                            "group %s cluster %d class %d (%s): no pool examples, "
                            "dropping %d requested draws",
                            g, k, label, side, want,
                        )
                        continue
                    draws = rng.choice(stratum, size=want, replace=True)
                    (lab_rows if side == "labeled" else unl_rows).append(draws)

    lab_idx = np.concatenate(lab_rows) if lab_rows else np.empty(0, np.int64)
    unl_idx = np.concatenate(unl_rows) if unl_rows else np.empty(0, np.int64)
    labeled = LabeledSet(pool.X[lab_idx], pool.g[lab_idx], pool.y[lab_idx])
    unlabeled = UnlabeledSet(pool.X[unl_idx], pool.g[unl_idx])
    truth = GroundTruth(
        components=None,
        group_ids=group_ids,
        labeled_weights=lab_w,
        labeled_priors=lab_p,
        unlabeled_weights=unl_w,
        unlabeled_priors=unl_p,
        labeled_clusters=clusters[lab_idx],
        unlabeled_clusters=clusters[unl_idx],
        unlabeled_labels=pool.y[unl_idx],
        labeled_source=lab_idx,
        unlabeled_source=unl_idx,
        setting=setting,
    )
    return labeled, unlabeled, truth


def true_partition(truth: GroundTruth) -> PartitionModel:
    """Nearest-centroid partition at the generating component-pair centers."""
    if truth.components is None:
        raise ConfigurationError("ground truth has no Gaussian components")
    return PartitionModel(np.stack([pair.center for pair in truth.components]))


def true_posterior(truth: GroundTruth, X, group=None, split: str = "unlabeled"):
    """Bayes posterior of the generating mixture (the oracle scorer).

    With ``group=None`` the per-group parameter rows must all agree (setting
    1); otherwise the given group's row is used.
    """
    if truth.components is None:
        raise ConfigurationError("ground truth has no Gaussian components")
    if split not in ("labeled", "unlabeled"):
        raise ConfigurationError("split must be 'labeled' or 'unlabeled'")
    weights = truth.labeled_weights if split == "labeled" else truth.unlabeled_weights
    priors = truth.labeled_priors if split == "labeled" else truth.unlabeled_priors
    if group is None:
        if not (np.ptp(weights, axis=0).max() == 0 and np.ptp(priors, axis=0).max() == 0):
            raise ConfigurationError(
                "group=None requires identical per-group parameters (setting 1)"
            )
        row = 0
    else:
        row = truth.group_row(int(group))
    X = as_float_matrix(X)
    w, a = weights[row], priors[row]
    log_pos = np.empty((len(truth.components), len(X)))
    log_neg = np.empty_like(log_pos)
    with np.errstate(divide="ignore"):
        for k, pair in enumerate(truth.components):
            log_pos[k] = np.log(w[k] * a[k]) + pair.positive.log_density(X)
            log_neg[k] = np.log(w[k] * (1.0 - a[k])) + pair.negative.log_density(X)
    return expit(logsumexp(log_pos, axis=0) - logsumexp(log_neg, axis=0))
