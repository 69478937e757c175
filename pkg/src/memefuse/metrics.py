"""Accuracy and support-weighted precision / recall."""
from __future__ import annotations

import warnings

import numpy as np


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def classification_metrics(y_true, y_pred, n_classes: int) -> dict:
    """Accuracy, weighted precision and weighted recall.

    Weights are true-class supports over the evaluated set. A class that is
    never predicted has undefined precision; its term counts as 0.
    """
    cm = confusion_matrix(y_true, y_pred, n_classes)
    total = cm.sum()
    if total == 0:
        return {"accuracy": 0.0, "precision": 0.0, "recall": 0.0}
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    undefined = (predicted == 0) & (support > 0)
    if undefined.any():
        warnings.warn(f"precision undefined for never-predicted classes {np.flatnonzero(undefined).tolist()}; "
                      "counted as 0", RuntimeWarning, stacklevel=2)
    # sum_c (s_c / N) * tp_c / p_c, divided by N last to avoid extra rounding
    weighted_tp = np.divide(tp * support, predicted, out=np.zeros_like(tp), where=predicted > 0)
    # sum_c (s_c / N) * tp_c / s_c reduces to sum(tp) / N
    return {
        "accuracy": float(tp.sum() / total),
        "precision": float(weighted_tp.sum() / total),
        "recall": float(tp.sum() / total),
    }
