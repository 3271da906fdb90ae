"""Unbiased prior estimation and the group-aware posterior correction.

Labeled cluster priors come from counting. Per-(group, cluster) priors on the
unlabeled data are the EM fixed point of

    a <- mean_x ( 1 + OR(labeled_prior, a) * (1 - p(x)) / p(x) )^{-1}

over the cell's calibrated posteriors p(x), started from their mean. The
corrected posterior applies the same odds-ratio factor in closed form. All
probabilities entering a ratio are clamped to [clamp, 1 - clamp].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._validation import as_float_matrix, as_group_array, freeze
from .core import CLAMP_EPS, LabeledSet, UnlabeledSet
from .classifier import ClusterClassifierEnsemble
from .errors import ConfigurationError, EmptyCellError
from .partition import PartitionModel


@dataclass(frozen=True)
class MllsConfig:
    max_iterations: int = 100
    tolerance: float = 1e-8
    clamp: float = CLAMP_EPS

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")


class ClusterPriors(NamedTuple):
    """Per-cluster labeled prior with a flag for empty-cluster fallbacks."""

    values: np.ndarray
    fallback: np.ndarray


@dataclass(frozen=True)
class PriorTable:
    """Labeled cluster priors and estimated per-(group, cluster) priors.

    ``groups`` lists the group ids present in the unlabeled data, sorted;
    the (group, cluster) tables are indexed by position in ``groups``.
    Cells with zero support carry the labeled prior and a fallback flag.
    """

    labeled: np.ndarray  # (K,)
    labeled_fallback: np.ndarray  # (K,) bool
    groups: np.ndarray  # (G_present,)
    group_cluster: np.ndarray  # (G_present, K)
    support: np.ndarray  # (G_present, K) int
    fallback: np.ndarray  # (G_present, K) bool
    iterations: np.ndarray  # (G_present, K) int

    def __post_init__(self):
        for name in ("labeled", "labeled_fallback", "groups", "group_cluster",
                     "support", "fallback", "iterations"):
            object.__setattr__(self, name, freeze(np.asarray(getattr(self, name))))

    @property
    def k(self) -> int:
        return self.labeled.shape[0]

    def rows_of(self, groups) -> np.ndarray:
        """Row index into the tables per group id; -1 for unseen groups."""
        g = as_group_array(groups)
        if len(self.groups) == 0:
            return np.full(len(g), -1, dtype=np.int64)
        pos = np.clip(np.searchsorted(self.groups, g), 0, len(self.groups) - 1)
        return np.where(self.groups[pos] == g, pos, -1)


def labeled_cluster_priors(
    labeled: LabeledSet, partition: PartitionModel, clamp: float = CLAMP_EPS
) -> ClusterPriors:
    """Fraction of positives per cluster, clamped to [clamp, 1 - clamp].

    Empty clusters receive the global labeled prior and a fallback flag.
    """
    if len(labeled) == 0:
        raise ConfigurationError("labeled set is empty")
    assignments = partition.assign(labeled.X)
    totals = np.bincount(assignments, minlength=partition.k).astype(np.float64)
    positives = np.bincount(
        assignments, weights=labeled.y.astype(np.float64), minlength=partition.k
    )
    global_prior = float(labeled.y.mean())
    fallback = totals == 0
    values = np.where(fallback, global_prior, positives / np.where(totals, totals, 1.0))
    return ClusterPriors(np.clip(values, clamp, 1.0 - clamp), fallback)


def _mlls_iterate(ratio: np.ndarray, init: float, labeled_prior: float, config: MllsConfig):
    clamp = config.clamp
    a = min(max(init, clamp), 1.0 - clamp)
    lab_odds = labeled_prior / (1.0 - labeled_prior)
    iterations = 0
    for t in range(config.max_iterations):
        or_factor = lab_odds * (1.0 - a) / a
        nxt = float(np.mean(1.0 / (1.0 + or_factor * ratio)))
        nxt = min(max(nxt, clamp), 1.0 - clamp)
        iterations = t + 1
        converged = abs(nxt - a) <= config.tolerance
        a = nxt
        if converged:
            break
    return a, iterations


def mlls_estimate(posteriors, labeled_prior: float, config: MllsConfig | None = None) -> float:
    """EM estimate of a cell's positive-class prior from calibrated posteriors.

    Starts from the mean posterior and iterates the fixed-point update until
    the change drops to ``config.tolerance`` or ``config.max_iterations`` is
    reached; every iterate is clamped to [clamp, 1 - clamp].
    """
    config = config or MllsConfig()
    p = np.asarray(posteriors, dtype=np.float64)
    if p.size == 0:
        raise EmptyCellError("cannot estimate a prior from an empty cell")
    p = np.clip(p, config.clamp, 1.0 - config.clamp)
    labeled_prior = float(np.clip(labeled_prior, config.clamp, 1.0 - config.clamp))
    value, _ = _mlls_iterate((1.0 - p) / p, float(p.mean()), labeled_prior, config)
    return value


def estimate_group_cluster_priors(
    unlabeled: UnlabeledSet,
    ensemble: ClusterClassifierEnsemble,
    labeled_priors: ClusterPriors,
    config: MllsConfig | None = None,
) -> PriorTable:
    """Run the EM estimate on every (group, cluster) cell of the unlabeled data.

    Cells without examples fall back to the labeled cluster prior and are
    flagged. Groups absent from the unlabeled data get no rows.
    """
    config = config or MllsConfig()
    k = ensemble.partition.k
    posteriors = ensemble.predict_proba(unlabeled.X) if len(unlabeled) else np.empty(0)
    clusters = ensemble.partition.assign(unlabeled.X) if len(unlabeled) else np.empty(0, np.int64)
    groups = np.unique(unlabeled.g)
    n_groups = len(groups)

    table = np.empty((n_groups, k))
    support = np.zeros((n_groups, k), dtype=np.int64)
    fallback = np.zeros((n_groups, k), dtype=bool)
    iterations = np.zeros((n_groups, k), dtype=np.int64)
    ratio = (1.0 - posteriors) / posteriors if len(unlabeled) else posteriors
    for gi, g in enumerate(groups):
        rows = np.flatnonzero(unlabeled.g == g)
        cell_clusters = clusters[rows]
        for kk in range(k):
            cell = rows[cell_clusters == kk]
            support[gi, kk] = len(cell)
            if len(cell) == 0:
                table[gi, kk] = labeled_priors.values[kk]
                fallback[gi, kk] = True
                continue
            table[gi, kk], iterations[gi, kk] = _mlls_iterate(
                ratio[cell],
                float(posteriors[cell].mean()),
                float(labeled_priors.values[kk]),
                config,
            )
    return PriorTable(
        labeled=labeled_priors.values,
        labeled_fallback=labeled_priors.fallback,
        groups=groups,
        group_cluster=table,
        support=support,
        fallback=fallback,
        iterations=iterations,
    )


def corrected_posterior(posterior, labeled_prior, group_prior, clamp: float = CLAMP_EPS):
    """Closed-form group-aware posterior.

    Computes ``1 / (1 + OR(labeled_prior, group_prior) * (1 - p) / p)`` with
    inputs clamped to [clamp, 1 - clamp]. Where the two priors are equal the
    posterior is returned unchanged (the odds-ratio factor is exactly one).
    With ``clamp=0`` inputs must lie strictly inside (0, 1).
    """
    p = np.clip(posterior, clamp, 1.0 - clamp) if clamp else np.asarray(posterior, float)
    a = np.clip(labeled_prior, clamp, 1.0 - clamp) if clamp else np.asarray(labeled_prior, float)
    b = np.clip(group_prior, clamp, 1.0 - clamp) if clamp else np.asarray(group_prior, float)
    or_factor = (a / (1.0 - a)) * ((1.0 - b) / b)
    out = 1.0 / (1.0 + or_factor * (1.0 - p) / p)
    return np.where(a == b, p, out)


class Prediction(NamedTuple):
    """Vectorized prediction output of a :class:`GroupAwareModel`."""

    group_posterior: np.ndarray
    posterior: np.ndarray
    cluster: np.ndarray
    unseen_group: np.ndarray
    cell_fallback: np.ndarray


@dataclass(frozen=True)
class GroupAwareModel:
    """Calibrated per-cluster classifier plus the estimated prior table."""

    ensemble: ClusterClassifierEnsemble
    priors: PriorTable

    def __post_init__(self):
        if self.priors.k != self.ensemble.partition.k:
            raise ConfigurationError("prior table and partition disagree on K")

    def predict(self, X, groups) -> Prediction:
        X = as_float_matrix(X, d=self.ensemble.partition.d)
        groups = as_group_array(groups, n=len(X))
        posterior = self.ensemble.predict_proba(X)
        cluster = self.ensemble.partition.assign(X)
        rows = self.priors.rows_of(groups)
        unseen = rows == -1
        safe_rows = np.where(unseen, 0, rows)
        if len(self.priors.groups) == 0:
            out = posterior.copy()
            flags = np.zeros(len(X), dtype=bool)
            return Prediction(out, posterior, cluster, np.ones(len(X), bool), flags)
        labeled_prior = self.priors.labeled[cluster]
        group_prior = self.priors.group_cluster[safe_rows, cluster]
        out = corrected_posterior(posterior, labeled_prior, group_prior)
        out = np.where(unseen, posterior, out)
        cell_fallback = self.priors.fallback[safe_rows, cluster] & ~unseen
        return Prediction(out, posterior, cluster, unseen, cell_fallback)


def group_aware_posterior(model: GroupAwareModel, x, g: int) -> float:
    """Group-aware posterior for one feature vector.

    For groups without a prior-table row the group-agnostic posterior is
    returned unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    return float(model.predict(x[None, :], np.array([g])).group_posterior[0])
