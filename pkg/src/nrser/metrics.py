"""Evaluation metrics: CCC, macro-F1 and detection accuracy."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def ccc(x, y) -> float:
    """Concordance correlation coefficient with population moments.

    When the denominator vanishes (both series constant with equal means)
    the result is 1 if the series are identical and 0 otherwise.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("ccc expects two 1-D sequences of equal length")
    if x.size < 2:
        raise ValueError("ccc needs at least two points")
    mx, my = x.mean(), y.mean()
    vx, vy = np.mean((x - mx) ** 2), np.mean((y - my) ** 2)
    cov = np.mean((x - mx) * (y - my))
    den = vx + vy + (mx - my) ** 2
    if den == 0.0:
        return 1.0 if np.array_equal(x, y) else 0.0
    return float(np.clip(2.0 * cov / den, -1.0, 1.0))


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def macro_f1(y_true, y_pred, n_classes: int = 10) -> float:
    """Unweighted mean of per-class F1 over all ``n_classes``.

    Predictions outside 0..n_classes-1 (e.g. -1 for a gated utterance) are
    wrong for every class. A class with no true and no predicted samples
    scores F1 = 0.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    if y_true.shape != y_pred.shape:
        raise ValueError("label and prediction counts differ")
    f1s = []
    for c in range(n_classes):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        den = 2 * tp + fp + fn
        f1s.append(2.0 * tp / den if den else 0.0)
    return float(np.mean(f1s))


def detection_accuracy(is_speech_true: Sequence[bool], is_speech_pred: Sequence[bool]) -> float:
    t = np.asarray(is_speech_true, dtype=bool)
    p = np.asarray(is_speech_pred, dtype=bool)
    if t.shape != p.shape:
        raise ValueError("label and prediction counts differ")
    if t.size == 0:
        return float("nan")
    return float(np.mean(t == p))
