"""Micro- and macro-averaged F1 for single-label multiclass predictions."""

from __future__ import annotations

import numpy as np


def confusion(y_true, y_pred, num_classes: int | None = None) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"label shapes differ: {y_true.shape} vs {y_pred.shape}")
    n = num_classes or (int(max(y_true.max(initial=-1), y_pred.max(initial=-1))) + 1)
    cm = np.zeros((n, n), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def micro_f1(y_true, y_pred) -> float:
    """Pooled F1; equals accuracy when every sample carries exactly one label."""
    cm = confusion(y_true, y_pred)
    tp = np.trace(cm)
    fp = cm.sum() - tp
    fn = fp
    denom = 2 * tp + fp + fn
    return float(2 * tp / denom) if denom else 0.0


def macro_f1(y_true, y_pred) -> float:
    """Unweighted mean of per-class F1 over classes seen in either array."""
    cm = confusion(y_true, y_pred)
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    present = (cm.sum(axis=0) + cm.sum(axis=1)) > 0
    denom = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denom, out=np.zeros_like(tp), where=denom > 0)
    return float(f1[present].mean()) if present.any() else 0.0
