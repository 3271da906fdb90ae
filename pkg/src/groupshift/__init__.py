"""Group-aware, bias-corrected semi-supervised binary classification.

The pipeline partitions the feature space with mini-batch k-means, trains
calibrated per-cluster classifiers on (possibly biased) labeled data,
estimates unbiased per-(group, cluster) class priors from unlabeled data via
an EM fixed point, and corrects posteriors with a closed-form odds-ratio
adjustment. An exact finite-distribution oracle verifies the underlying
AUC-gap and posterior-correction identities.
"""

from .core import (
    CLAMP_EPS,
    CellIndex,
    LabeledExample,
    LabeledSet,
    UnlabeledExample,
    UnlabeledSet,
    odds_ratio,
    restrict,
    restrict_cell,
    split_groups_holdout,
)
from .partition import (
    ClusterPartitioner,
    KMeansConfig,
    PartitionModel,
    assign,
    fit_kmeans,
    select_k,
    silhouette,
)

__all__ = [
    "CLAMP_EPS",
    "CellIndex",
    "ClusterPartitioner",
    "KMeansConfig",
    "LabeledExample",
    "LabeledSet",
    "PartitionModel",
    "UnlabeledExample",
    "UnlabeledSet",
    "assign",
    "fit_kmeans",
    "odds_ratio",
    "restrict",
    "restrict_cell",
    "select_k",
    "silhouette",
    "split_groups_holdout",
]

__version__ = "0.1.0"
