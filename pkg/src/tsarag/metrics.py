"""Scalar evaluation metrics with explicit degenerate-case conventions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllTargetsNearZero, NonBinary, ShapeMismatch

MAPE_EPS = 1e-8


def _paired(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(truth, dtype=np.float64).ravel()
    p = np.asarray(pred, dtype=np.float64).ravel()
    if t.shape != p.shape or t.size == 0:
        raise ShapeMismatch(f"need equal nonempty vectors, got {t.shape} and {p.shape}")
    return t, p


def mae(truth, pred) -> float:
    t, p = _paired(truth, pred)
    return float(np.mean(np.abs(t - p)))


def rmse(truth, pred) -> float:
    t, p = _paired(truth, pred)
    return float(np.sqrt(np.mean((t - p) ** 2)))


def mape(truth, pred, eps: float = MAPE_EPS) -> float:
    """Mean absolute percentage error over targets with |truth| >= eps."""
    t, p = _paired(truth, pred)
    keep = np.abs(t) >= eps
    if not keep.any():
        raise AllTargetsNearZero(f"no target reaches the |t| >= {eps} cutoff")
    return float(100.0 * np.mean(np.abs((t[keep] - p[keep]) / t[keep])))


@dataclass(frozen=True)
class Confusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(flags, labels) -> Confusion:
    """Binary confusion counts; flags are predictions, labels are truth."""
    f = np.asarray(flags).ravel()
    y = np.asarray(labels).ravel()
    if f.shape != y.shape:
        raise ShapeMismatch(f"flags {f.shape} vs labels {y.shape}")
    if not (np.isin(f, (0, 1)).all() and np.isin(y, (0, 1)).all()):
        raise NonBinary("flags and labels must be 0/1")
    f = f.astype(bool)
    y = y.astype(bool)
    return Confusion(
        tp=int(np.sum(f & y)),
        fp=int(np.sum(f & ~y)),
        tn=int(np.sum(~f & ~y)),
        fn=int(np.sum(~f & y)),
    )


def prf1(c: Confusion) -> tuple[float, float, float]:
    """Precision, recall, F1 with the 0/0 -> 0 convention."""
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return precision, recall, f1


def accuracy(pred_labels, true_labels) -> float:
    p = np.asarray(pred_labels).ravel()
    t = np.asarray(true_labels).ravel()
    if p.shape != t.shape or p.size == 0:
        raise ShapeMismatch(f"need equal nonempty vectors, got {p.shape} and {t.shape}")
    return float(np.mean(p == t))


def macro_precision_recall(pred_labels, true_labels) -> tuple[float, float]:
    """Macro-averaged precision/recall over classes present in either vector.

    Per-class 0/0 counts contribute 0, mirroring the binary convention.
    """
    p = np.asarray(pred_labels).ravel()
    t = np.asarray(true_labels).ravel()
    if p.shape != t.shape or p.size == 0:
        raise ShapeMismatch(f"need equal nonempty vectors, got {p.shape} and {t.shape}")
    classes = np.union1d(p, t)
    precisions, recalls = [], []
    for c in classes:
        tp = int(np.sum((p == c) & (t == c)))
        fp = int(np.sum((p == c) & (t != c)))
        fn = int(np.sum((p != c) & (t == c)))
        precisions.append(tp / (tp + fp) if (tp + fp) else 0.0)
        recalls.append(tp / (tp + fn) if (tp + fn) else 0.0)
    return float(np.mean(precisions)), float(np.mean(recalls))
