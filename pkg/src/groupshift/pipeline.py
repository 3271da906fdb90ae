"""End-to-end fitting of the group-aware, bias-corrected classifier.

Steps: partition the combined pool (or accept an injected/forced partition),
train per-cluster calibrated classifiers on the labeled data with a
group-level calibration holdout, count labeled cluster priors over the full
labeled set, estimate per-(group, cluster) priors from the unlabeled data,
and assemble the corrected-posterior model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._stats import seed_int
from ._validation import as_float_matrix, as_group_array, as_binary_labels
from .classifier import fit_ensemble
from .core import LabeledSet, UnlabeledSet, split_groups_holdout
from .errors import ConfigurationError
from .partition import KMeansConfig, PartitionModel, fit_kmeans, select_k
from .shift import (
    GroupAwareModel,
    MllsConfig,
    estimate_group_cluster_priors,
    labeled_cluster_priors,
)


@dataclass(frozen=True)
class PipelineConfig:
    learner: str = "qda"
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    mlls: MllsConfig = field(default_factory=MllsConfig)
    holdout_fraction: float = 0.2
    force_k: int | None = None
    hyperparameters: dict | None = None
    seed: int = 0


def fit_group_aware(
    labeled: LabeledSet,
    unlabeled: UnlabeledSet,
    config: PipelineConfig | None = None,
    *,
    partition: PartitionModel | None = None,
    prior_unlabeled: UnlabeledSet | None = None,
):
    """Fit the full pipeline; returns ``(GroupAwareModel, diagnostics)``.

    ``partition`` injects a known clustering (bypassing selection);
    ``config.force_k`` fits k-means at a fixed K instead of selecting it.
    ``prior_unlabeled`` restricts prior estimation to a subset of the
    unlabeled data while the partition is still fit on all of it.
    Labeled cluster priors are counted over the full labeled set; the
    calibration holdout only serves Platt scaling.
    """
    config = config or PipelineConfig()
    if labeled.d != unlabeled.d:
        raise ConfigurationError("labeled and unlabeled dimensions differ")
    root = np.random.SeedSequence(config.seed)
    ss_split, ss_kmeans, ss_fit = root.spawn(3)

    train, validation = split_groups_holdout(
        labeled, config.holdout_fraction, seed_int(ss_split)
    )

    silhouettes: dict = {}
    if partition is not None:
        mode = "injected"
    elif config.force_k is not None:
        mode = f"forced K={config.force_k}"
        pool = np.vstack([labeled.X, unlabeled.X])
        partition = fit_kmeans(
            pool, config.force_k, replace(config.kmeans, seed=seed_int(ss_kmeans))
        )
    else:
        mode = "selected"
        partition, silhouettes = select_k(
            labeled,
            unlabeled,
            replace(config.kmeans, seed=seed_int(ss_kmeans)),
            return_scores=True,
        )

    ensemble = fit_ensemble(
        train,
        validation,
        partition,
        kind=config.learner,
        seed=seed_int(ss_fit),
        hyperparameters=config.hyperparameters,
    )
    priors_labeled = labeled_cluster_priors(labeled, partition, clamp=config.mlls.clamp)
    table = estimate_group_cluster_priors(
        prior_unlabeled if prior_unlabeled is not None else unlabeled,
        ensemble,
        priors_labeled,
        config.mlls,
    )
    model = GroupAwareModel(ensemble, table)
    diagnostics = {
        "k": partition.k,
        "k_selection": mode,
        "silhouettes": {str(key): float(v) for key, v in silhouettes.items()},
        "learner": config.learner,
        "labeled_prior_fallbacks": int(priors_labeled.fallback.sum()),
        "cells": {
            "count": int(table.support.size),
            "empty": int(table.fallback.sum()),
            "min_support": int(table.support.min()) if table.support.size else 0,
            "max_iterations": int(table.iterations.max()) if table.iterations.size else 0,
        },
        "degenerate_clusters": [
            k for k, m in enumerate(ensemble.members) if m.fallback is not None
        ],
    }
    return model, diagnostics


class GroupAwareClassifier(BaseEstimator):
    """Scikit-learn style front end for the full pipeline.

    ``fit`` takes the labeled data plus the unlabeled pool (with groups for
    both); ``predict_proba`` needs the group of each row. The corrected
    posterior column is ``predict_proba(...)[: , 1]``.
    """

    def __init__(
        self,
        learner="qda",
        force_k=None,
        candidates=(1, 2, 4, 8),
        batch_size=4096,
        iterations=100,
        silhouette_sample_size=25000,
        holdout_fraction=0.2,
        mlls_iterations=100,
        mlls_tolerance=1e-8,
        random_state=0,
    ):
        self.learner = learner
        self.force_k = force_k
        self.candidates = candidates
        self.batch_size = batch_size
        self.iterations = iterations
        self.silhouette_sample_size = silhouette_sample_size
        self.holdout_fraction = holdout_fraction
        self.mlls_iterations = mlls_iterations
        self.mlls_tolerance = mlls_tolerance
        self.random_state = random_state

    def _config(self) -> PipelineConfig:
        return PipelineConfig(
            learner=self.learner,
            kmeans=KMeansConfig(
                batch_size=self.batch_size,
                iterations=self.iterations,
                candidates=tuple(self.candidates),
                silhouette_sample_size=self.silhouette_sample_size,
            ),
            mlls=MllsConfig(
                max_iterations=self.mlls_iterations, tolerance=self.mlls_tolerance
            ),
            holdout_fraction=self.holdout_fraction,
            force_k=self.force_k,
            seed=self.random_state,
        )

    def fit(self, X, y, groups, unlabeled_X, unlabeled_groups, partition=None):
        X = as_float_matrix(X)
        labeled = LabeledSet(X, as_group_array(groups, n=len(X)), as_binary_labels(y, n=len(X)))
        unlabeled = UnlabeledSet(unlabeled_X, unlabeled_groups)
        self.model_, self.diagnostics_ = fit_group_aware(
            labeled, unlabeled, self._config(), partition=partition
        )
        self.n_clusters_ = self.model_.ensemble.partition.k
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X, groups):
        check_is_fitted(self, "model_")
        return self.model_.predict(X, groups).group_posterior

    def predict_proba(self, X, groups):
        p = self.decision_function(X, groups)
        return np.column_stack([1.0 - p, p])

    def predict(self, X, groups):
        return (self.decision_function(X, groups) >= 0.5).astype(np.int64)
