"""Residual anomaly scoring, thresholding, flagging, point adjustment, FDR.

The score pipeline runs on standardized data: per-variable scores are raw
absolute residuals, the per-timestep maximum across variables is smoothed
by a trailing moving average of w_a points, the threshold is the maximum
smoothed score over the validation range, and test points strictly above
the threshold are flagged.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyValidation, InvalidWindow, NoFaults, ShapeMismatch


@dataclass(frozen=True)
class AnomalyScores:
    per_variable: np.ndarray  # (N, T')
    aggregated: np.ndarray    # (T',)
    w_a: int


@dataclass(frozen=True)
class Threshold:
    value: float


def score_series(truth: np.ndarray, pred: np.ndarray) -> np.ndarray:
    """Elementwise absolute residual |truth - pred|."""
    t = np.asarray(truth, dtype=np.float64)
    p = np.asarray(pred, dtype=np.float64)
    if t.shape != p.shape:
        raise ShapeMismatch(f"truth {t.shape} vs pred {p.shape}")
    return np.abs(t - p)


def aggregate(per_variable: np.ndarray, w_a: int) -> np.ndarray:
    """Trailing moving average of the per-timestep max across variables.

    The first w_a-1 outputs average only the points available so far.
    Implemented with plain left-to-right accumulation so results are
    bit-identical to the definitional loop.
    """
    if w_a < 1:
        raise InvalidWindow(f"w_a must be >= 1, got {w_a}")
    pv = np.atleast_2d(np.asarray(per_variable, dtype=np.float64))
    m = pv.max(axis=0)
    out = np.empty(m.shape[0])
    for t in range(m.shape[0]):
        lo = max(0, t - w_a + 1)
        acc = 0.0
        for j in range(lo, t + 1):
            acc += m[j]
        out[t] = acc / (t + 1 - lo)
    return out


def compute_threshold(val_scores: np.ndarray) -> Threshold:
    """Maximum aggregated score over the validation range."""
    v = np.asarray(val_scores, dtype=np.float64).ravel()
    if v.size == 0:
        raise EmptyValidation("validation scores are empty")
    return Threshold(value=float(v.max()))


def flag(test_scores: np.ndarray, th: Threshold) -> np.ndarray:
    """1 where score strictly exceeds the threshold; equality stays 0."""
    s = np.asarray(test_scores, dtype=np.float64).ravel()
    return (s > th.value).astype(np.uint8)


def _label_segments(labels: np.ndarray):
    """Yield (start, end) half-open spans of maximal label-1 runs."""
    padded = np.concatenate([[0], labels, [0]])
    diff = np.diff(padded)
    starts = np.flatnonzero(diff == 1)
    ends = np.flatnonzero(diff == -1)
    return list(zip(starts, ends))


def point_adjust(flags: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Expand hits: any flag inside a labeled segment flags the whole segment."""
    f = np.asarray(flags).ravel().astype(np.uint8)
    y = np.asarray(labels).ravel().astype(np.uint8)
    if f.shape != y.shape:
        raise ShapeMismatch(f"flags {f.shape} vs labels {y.shape}")
    adjusted = f.copy()
    for start, end in _label_segments(y):
        if f[start:end].any():
            adjusted[start:end] = 1
    return adjusted


def count_fault_runs(flags: np.ndarray, labels: np.ndarray) -> tuple[int, int]:
    """(detected, total) fault runs; a run counts detected if any raw flag hits."""
    f = np.asarray(flags).ravel().astype(np.uint8)
    y = np.asarray(labels).ravel().astype(np.uint8)
    if f.shape != y.shape:
        raise ShapeMismatch(f"flags {f.shape} vs labels {y.shape}")
    segments = _label_segments(y)
    detected = sum(1 for start, end in segments if f[start:end].any())
    return detected, len(segments)


def fdr(detected_runs: int, total_runs: int) -> float:
    """Fault detection rate in percent."""
    if total_runs < 1:
        raise NoFaults("no fault runs to detect")
    if not 0 <= detected_runs <= total_runs:
        raise ValueError(f"detected {detected_runs} outside [0, {total_runs}]")
    return 100.0 * detected_runs / total_runs
