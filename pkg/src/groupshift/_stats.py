"""Small numeric helpers shared across modules."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def rank_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with half credit for ties, O(n log n).

    Assumes both classes are present; callers validate.
    """
    ranks = rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def seed_int(ss: np.random.SeedSequence) -> int:
    """Deterministic 64-bit integer seed derived from a seed sequence."""
    return int(ss.generate_state(1, np.uint64)[0])
