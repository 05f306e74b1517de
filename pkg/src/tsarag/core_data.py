"""Data matrix, masks, windowing, standardization, chronological splits.

Conventions: a data matrix holds N series over T timestamps, one series per
row; a half-open interval ``(start, end)`` selects timestamp columns
``start .. end-1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSeries,
    InvalidRatio,
    MissingStats,
    RangeTooShort,
    ShapeMismatch,
)

Interval = tuple[int, int]


def _readonly(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SeriesMatrix:
    """N univariate series over T shared timestamps.

    ``stats`` holds per-series (mean, std) once :func:`standardize` has run,
    enabling the inverse transform back to the original scale.
    """

    values: np.ndarray
    series_ids: tuple[str, ...]
    stats: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ShapeMismatch(f"values must be a nonempty 2-D matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("series values must all be finite")
        ids = tuple(str(s) for s in self.series_ids)
        if len(ids) != v.shape[0]:
            raise ShapeMismatch(f"{len(ids)} series ids for {v.shape[0]} series")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "series_ids", ids)
        if self.stats is not None:
            st = tuple((float(m), float(s)) for m, s in self.stats)
            if len(st) != v.shape[0]:
                raise ShapeMismatch("stats length must equal the number of series")
            if any(s <= 0.0 for _, s in st):
                raise ValueError("every stored std must be positive")
            object.__setattr__(self, "stats", st)

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_steps(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MaskMatrix:
    """Binary observed/missing indicator aligned with a SeriesMatrix.

    Entry 1 means observed, 0 means missing.
    """

    flags: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.flags)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ShapeMismatch(f"flags must be a nonempty 2-D matrix, got shape {f.shape}")
        if not np.isin(f, (0, 1)).all():
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "flags", _readonly(f.astype(np.uint8)))

    @property
    def missing_fraction(self) -> float:
        return (self.flags.size - int(self.flags.sum())) / self.flags.size

    def check_aligned(self, data: SeriesMatrix) -> None:
        if self.flags.shape != data.values.shape:
            raise ShapeMismatch(
                f"mask shape {self.flags.shape} != data shape {data.values.shape}"
            )


@dataclass(frozen=True)
class WindowSet:
    """Paired (input, target) windows cut from a time range.

    ``inputs[w]`` covers timestamps ``anchor-tau+1 .. anchor`` and
    ``targets[w]`` covers ``anchor+1 .. anchor+nu``.
    """

    inputs: np.ndarray        # (W, N, tau)
    targets: np.ndarray       # (W, N, nu)
    tau: int
    nu: int
    anchor_times: np.ndarray  # (W,)

    def __post_init__(self):
        ins = np.asarray(self.inputs, dtype=np.float64)
        tgt = np.asarray(self.targets, dtype=np.float64)
        anchors = np.asarray(self.anchor_times, dtype=np.int64)
        if not (len(ins) == len(tgt) == len(anchors)):
            raise ShapeMismatch("inputs, targets, anchors must have equal length")
        if len(ins) and (ins.shape[2] != self.tau or tgt.shape[2] != self.nu):
            raise ShapeMismatch("window widths disagree with tau/nu")
        object.__setattr__(self, "inputs", _readonly(ins))
        object.__setattr__(self, "targets", _readonly(tgt))
        object.__setattr__(self, "anchor_times", _readonly(anchors))

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class Split:
    """Chronological train/val/test partition of [0, T)."""

    train_range: Interval
    val_range: Interval
    test_range: Interval

    def __post_init__(self):
        (a, b), (c, d), (e, f) = self.train_range, self.val_range, self.test_range
        if not (0 == a <= b == c <= d == e <= f):
            raise InvalidRatio("split ranges must be contiguous and ordered from 0")


def window_array(arr: np.ndarray, rng: Interval, tau: int, nu: int, stride: int = 1):
    """Window any (N, T) array over ``rng``; shared by data and mask paths.

    Returns (inputs, targets, anchors) where anchors are the last input
    timestamps, running from ``rng.start + tau - 1`` to ``rng.end - nu - 1``.
    """
    start, end = int(rng[0]), int(rng[1])
    if tau < 1 or nu < 1 or stride < 1:
        raise ValueError("tau, nu, stride must all be >= 1")
    if end - start < tau + nu:
        raise RangeTooShort(
            f"range [{start}, {end}) of length {end - start} cannot hold tau+nu={tau + nu}"
        )
    anchors = np.arange(start + tau - 1, end - nu, stride, dtype=np.int64)
    inputs = np.stack([arr[:, t - tau + 1 : t + 1] for t in anchors])
    targets = np.stack([arr[:, t + 1 : t + nu + 1] for t in anchors])
    return inputs, targets, anchors


def make_windows(
    data: SeriesMatrix, rng: Interval, tau: int, nu: int, stride: int = 1
) -> WindowSet:
    """Slide a (tau, nu) window pair over ``rng`` of the data matrix."""
    inputs, targets, anchors = window_array(data.values, rng, tau, nu, stride)
    return WindowSet(inputs=inputs, targets=targets, tau=tau, nu=nu, anchor_times=anchors)


def context_range(rng: Interval, tau: int, floor: int = 0) -> Interval:
    """Extend a split range backwards by tau-1 steps of input context.

    Windowing the extended range keeps every anchor inside the original
    split while letting inputs borrow context from the preceding split.
    """
    return (max(floor, rng[0] - tau + 1), rng[1])


def standardize(data: SeriesMatrix, fit_range: Interval) -> SeriesMatrix:
    """Zero-mean/unit-variance transform with stats fit on ``fit_range`` only.

    Uses the population standard deviation. Raises DegenerateSeries when a
    series is constant over the fit range.
    """
    start, end = fit_range
    if end <= start:
        raise ValueError("fit range must be nonempty")
    fit = data.values[:, start:end]
    means = fit.mean(axis=1)
    stds = fit.std(axis=1)
    bad = np.flatnonzero(stds == 0.0)
    if bad.size:
        raise DegenerateSeries(
            f"series {data.series_ids[bad[0]]!r} is constant over the fit range"
        )
    z = (data.values - means[:, None]) / stds[:, None]
    stats = tuple((float(m), float(s)) for m, s in zip(means, stds))
    return SeriesMatrix(values=z, series_ids=data.series_ids, stats=stats)


def inverse_standardize(data: SeriesMatrix) -> SeriesMatrix:
    """Map standardized values back to the original scale via stored stats."""
    if data.stats is None:
        raise MissingStats("matrix carries no standardization stats")
    means = np.array([m for m, _ in data.stats])
    stds = np.array([s for _, s in data.stats])
    x = data.values * stds[:, None] + means[:, None]
    return SeriesMatrix(values=x, series_ids=data.series_ids, stats=None)


def rescale_windows(windows: np.ndarray, stats) -> np.ndarray:
    """Inverse-standardize an array of windows shaped (..., N, width)."""
    means = np.array([m for m, _ in stats])
    stds = np.array([s for _, s in stats])
    return windows * stds[:, None] + means[:, None]


def chronological_split(n_steps: int, ratio: tuple[int, int, int]) -> Split:
    """Partition [0, T) chronologically by an integer ratio such as 6:2:2."""
    r_train, r_val, r_test = ratio
    if min(r_train, r_val, r_test) <= 0:
        raise InvalidRatio(f"ratio parts must be positive, got {ratio}")
    total = r_train + r_val + r_test
    if n_steps < total:
        raise InvalidRatio(f"T={n_steps} is shorter than the ratio sum {total}")
    b1 = n_steps * r_train // total
    b2 = n_steps * (r_train + r_val) // total
    return Split(train_range=(0, b1), val_range=(b1, b2), test_range=(b2, n_steps))
