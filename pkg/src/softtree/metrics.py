"""ROC-AUC via midranks and multi-seed aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import InputError, UndefinedAUCError


@dataclass(frozen=True)
class AucResult:
    auc: float
    n_pos: int
    n_neg: int

    def __float__(self) -> float:
        return self.auc


def roc_auc(scores, labels) -> AucResult:
    """Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise InputError(f"{scores.size} scores but {labels.size} labels")
    if not np.all(np.isfinite(scores)):
        raise InputError("scores contain non-finite values")
    pos = labels == 1
    if not np.all(pos | (labels == 0)):
        raise InputError("labels must be binary 0/1")
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC needs at least one positive and one negative sample")
    rank_sum = rankdata(scores, method="average")[pos].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return AucResult(float(u / (n_pos * n_neg)), n_pos, n_neg)


def aggregate(values) -> tuple[float, float, int]:
    """Mean, sample standard deviation (0 for a single value) and count."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise InputError("cannot aggregate an empty sequence")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std, int(arr.size)
