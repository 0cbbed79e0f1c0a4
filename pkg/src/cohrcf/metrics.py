"""Prediction-quality metrics over ``(predicted, actual)`` pairs."""
from __future__ import annotations

import numpy as np

from cohrcf.errors import EmptyInput


def _pairs(predictions):
    arr = np.asarray(list(predictions), dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("no predictions to score")
    return arr[:, 0], arr[:, 1]


def mae(predictions) -> float:
    """Mean absolute error."""
    pred, actual = _pairs(predictions)
    return float(np.mean(np.abs(pred - actual)))


def precision_recall(predictions, threshold: float = 4) -> tuple[float, float]:
    """Threshold precision and recall.

    An item is relevant when its true rating is at least ``threshold`` and
    recommended when its predicted rating is.  Empty denominators give 0.
    """
    pred, actual = _pairs(predictions)
    relevant = actual >= threshold
    recommended = pred >= threshold
    hits = np.count_nonzero(relevant & recommended)
    n_rec = np.count_nonzero(recommended)
    n_rel = np.count_nonzero(relevant)
    precision = hits / n_rec if n_rec else 0.0
    recall = hits / n_rel if n_rel else 0.0
    return float(precision), float(recall)


def f1(precision: float, recall: float) -> float:
    total = precision + recall
    return 0.0 if total == 0 else 2.0 * precision * recall / total
