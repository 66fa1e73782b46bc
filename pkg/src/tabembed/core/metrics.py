"""Evaluation metrics for binary prediction."""

import numpy as np
from scipy.stats import rankdata
from sklearn.metrics import log_loss

from tabembed.utils.constants import BCE_EPS
from tabembed.utils.errors import DimensionError, UndefinedMetricError


def auc(preds: np.ndarray, labels: np.ndarray) -> float:
    """
    Rank-based area under the ROC curve; tied predictions count one half.

    Args:
        preds: Scores, higher means more likely positive
        labels: Binary labels

    Returns:
        AUC in [0, 1]

    Raises:
        UndefinedMetricError: If ``labels`` contain a single class
    """
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if preds.shape != labels.shape:
        raise DimensionError(f"auc: {preds.size} predictions vs {labels.size} labels")

    positive = labels == 1
    n_pos = int(positive.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when labels contain a single class")

    ranks = rankdata(preds, method="average")
    return float((ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pairwise_auc(preds: np.ndarray, labels: np.ndarray) -> float:
    """Brute-force AUC over all positive/negative pairs (wins + ½ ties)."""
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    pos, neg = preds[labels == 1], preds[labels != 1]
    if pos.size == 0 or neg.size == 0:
        raise UndefinedMetricError("AUC is undefined when labels contain a single class")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / (pos.size * neg.size))


def logloss(preds: np.ndarray, labels: np.ndarray, eps: float = BCE_EPS) -> float:
    """Mean binary cross-entropy with predictions clipped to ``[eps, 1 - eps]``."""
    preds = np.clip(np.asarray(preds, dtype=np.float64).reshape(-1), eps, 1.0 - eps)
    return float(log_loss(np.asarray(labels).reshape(-1), preds, labels=[0, 1]))
