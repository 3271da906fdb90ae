"""Core dataset types, group/cluster indexing, and the odds-ratio primitive.

All types are immutable after construction and every operation is a pure
function, so values can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, NamedTuple

import numpy as np

from ._validation import (
    as_binary_labels,
    as_float_matrix,
    as_group_array,
    check_fraction,
    freeze,
)
from .errors import ConfigurationError

if TYPE_CHECKING:
    from .partition import PartitionModel

#: Probabilities entering odds ratios downstream are clamped to
#: [CLAMP_EPS, 1 - CLAMP_EPS] so that corrections stay finite.
CLAMP_EPS = 1e-6


class LabeledExample(NamedTuple):
    x: np.ndarray
    g: int
    y: int


class UnlabeledExample(NamedTuple):
    x: np.ndarray
    g: int


class CellIndex(NamedTuple):
    """Index of one (group, cluster) cell of the unlabeled data."""

    g: int
    k: int


@dataclass(frozen=True)
class LabeledSet:
    """Examples (x, g, y) sharing one feature dimension.

    ``X`` is (n, d) float, ``g`` holds non-negative group indices and ``y``
    holds labels in {0, 1}.
    """

    X: np.ndarray
    g: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = as_float_matrix(self.X, name="X")
        object.__setattr__(self, "X", freeze(X))
        object.__setattr__(self, "g", freeze(as_group_array(self.g, n=len(X))))
        object.__setattr__(self, "y", freeze(as_binary_labels(self.y, n=len(X))))

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def group_ids(self) -> np.ndarray:
        return np.unique(self.g)

    def subset(self, index) -> "LabeledSet":
        return LabeledSet(self.X[index], self.g[index], self.y[index])

    def examples(self) -> Iterator[LabeledExample]:
        for i in range(len(self)):
            yield LabeledExample(self.X[i], int(self.g[i]), int(self.y[i]))


@dataclass(frozen=True)
class UnlabeledSet:
    """Examples (x, g) sharing one feature dimension."""

    X: np.ndarray
    g: np.ndarray

    def __post_init__(self):
        X = as_float_matrix(self.X, name="X")
        object.__setattr__(self, "X", freeze(X))
        object.__setattr__(self, "g", freeze(as_group_array(self.g, n=len(X))))

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    def group_ids(self) -> np.ndarray:
        return np.unique(self.g)

    def subset(self, index) -> "UnlabeledSet":
        return UnlabeledSet(self.X[index], self.g[index])

    def examples(self) -> Iterator[UnlabeledExample]:
        for i in range(len(self)):
            yield UnlabeledExample(self.X[i], int(self.g[i]))


def odds_ratio(p: float, q: float) -> float:
    """Odds ratio (p/(1-p)) / (q/(1-q)) on [0, 1] x [0, 1].

    Boundary conventions: ``odds_ratio(p, p) == 1`` for every p including
    0 and 1; mixed boundary cases follow the limits of the definition
    (``p == 1 > q`` or ``q == 0 < p`` give ``inf``; ``p == 0 < q`` or
    ``q == 1 > p`` give 0).
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError(f"odds_ratio arguments must lie in [0, 1], got ({p!r}, {q!r})")
    if p == q:
        return 1.0
    if p == 1.0 or q == 0.0:
        return math.inf
    if p == 0.0 or q == 1.0:
        return 0.0
    return (p / (1.0 - p)) / (q / (1.0 - q))


def restrict(labeled: LabeledSet, partition: "PartitionModel", k: int) -> LabeledSet:
    """Labeled examples assigned to cluster ``k``, order preserved."""
    if not 0 <= k < partition.k:
        raise IndexError(f"cluster index {k} out of range for K={partition.k}")
    return labeled.subset(partition.assign(labeled.X) == k)


def restrict_cell(
    unlabeled: UnlabeledSet, partition: "PartitionModel", cell: CellIndex
) -> UnlabeledSet:
    """Unlabeled examples of group ``cell.g`` assigned to cluster ``cell.k``."""
    g, k = cell
    if not 0 <= k < partition.k:
        raise IndexError(f"cluster index {k} out of range for K={partition.k}")
    labels = partition.assign(unlabeled.X)
    return unlabeled.subset((labels == k) & (unlabeled.g == g))


def _choose_holdout_groups(
    groups: np.ndarray, fraction: float, rng: np.random.Generator
) -> np.ndarray:
    """Pick ceil(fraction * #groups) group ids uniformly without replacement."""
    # The small subtraction guards against ceil(0.2 * 10) -> 3 from float noise.
    n_hold = math.ceil(fraction * groups.size - 1e-9)
    n_hold = min(max(n_hold, 1), groups.size - 1)
    return rng.choice(groups, size=n_hold, replace=False)


def split_groups_holdout(dataset, fraction: float, seed: int):
    """Split a dataset into (train, holdout) parts along whole groups.

    The holdout part receives ``ceil(fraction * #groups)`` groups chosen
    uniformly at random; every example follows its group. At least one group
    is kept on each side. Deterministic given ``seed``.
    """
    check_fraction(fraction)
    groups = np.unique(dataset.g)
    if groups.size < 2:
        raise ConfigurationError(
            f"group holdout split needs at least 2 distinct groups, got {groups.size}"
        )
    held = _choose_holdout_groups(groups, fraction, np.random.default_rng(seed))
    mask = np.isin(dataset.g, held)
    return dataset.subset(~mask), dataset.subset(mask)
