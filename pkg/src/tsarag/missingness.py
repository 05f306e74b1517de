"""Synthetic missingness generators: point, block, temporal, spatial.

Block generators repeatedly drop axis-aligned rectangles (overlap allowed)
until the missing fraction first reaches the requested rate, so the final
rate lands in [p, p + max_block_area / (N*T)]. Every generator is a pure
function of (arguments, seed).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .core_data import MaskMatrix
from .errors import BlockTooLong, InvalidRate, InvalidSpec


class MissingPattern(str, Enum):
    POINT = "point"
    BLOCK = "block"
    TEMPORAL_BLOCK = "temporal_block"
    SPATIAL_BLOCK = "spatial_block"


@dataclass(frozen=True)
class MissingSpec:
    pattern: MissingPattern
    rate: float
    mean_block_len: int = 4
    seed: int = 0
    spatial_width: int = 1

    def __post_init__(self):
        object.__setattr__(self, "pattern", MissingPattern(self.pattern))
        if not 0.0 < self.rate < 1.0:
            raise InvalidRate(f"rate must be in (0, 1), got {self.rate}")
        if self.mean_block_len < 1:
            raise InvalidSpec("mean_block_len must be >= 1")


def _check_rate(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise InvalidRate(f"rate must be in (0, 1), got {p}")


def point_mask(n_series: int, n_steps: int, p: float, seed: int) -> MaskMatrix:
    """Drop each entry independently with probability p."""
    _check_rate(p)
    rng = np.random.default_rng(seed)
    flags = (rng.random((n_series, n_steps)) >= p).astype(np.uint8)
    return MaskMatrix(flags=flags)


def _span_bounds(mean_len: int) -> tuple[int, int]:
    # uniform on [ceil(l/2), floor(3l/2)] realizes mean length l
    return math.ceil(mean_len / 2), math.floor(3 * mean_len / 2)


def _rect_mask(
    n_series: int,
    n_steps: int,
    p: float,
    seed: int,
    time_span: tuple[int, int],
    series_span: tuple[int, int],
) -> MaskMatrix:
    """Shared rectangle sampler; draw order is fixed so constrained variants
    with identical bounds reproduce each other bit-for-bit."""
    _check_rate(p)
    rng = np.random.default_rng(seed)
    flags = np.ones((n_series, n_steps), dtype=np.uint8)
    total = n_series * n_steps
    missing = 0
    while missing / total < p:
        ts = int(rng.integers(time_span[0], time_span[1] + 1))
        ss = int(rng.integers(series_span[0], series_span[1] + 1))
        ts = min(ts, n_steps)
        ss = min(ss, n_series)
        t0 = int(rng.integers(0, n_steps - ts + 1))
        s0 = int(rng.integers(0, n_series - ss + 1))
        flags[s0 : s0 + ss, t0 : t0 + ts] = 0
        missing = total - int(flags.sum())
    return MaskMatrix(flags=flags)


def _check_block_len(mean_len: int, n_steps: int) -> None:
    if mean_len < 1:
        raise InvalidSpec("mean block length must be >= 1")
    if mean_len > n_steps / 2:
        raise BlockTooLong(f"mean block length {mean_len} exceeds T/2 = {n_steps / 2}")


def block_mask(n_series: int, n_steps: int, p: float, mean_len: int, seed: int) -> MaskMatrix:
    """Rectangular blocks spanning several series and several timestamps."""
    _check_block_len(mean_len, n_steps)
    series_max = max(1, math.ceil(n_series * mean_len / n_steps))
    return _rect_mask(
        n_series, n_steps, p, seed,
        time_span=_span_bounds(mean_len),
        series_span=(1, series_max),
    )


def temporal_block_mask(
    n_series: int, n_steps: int, p: float, mean_len: int, seed: int
) -> MaskMatrix:
    """Contiguous gaps confined to one series row each."""
    _check_block_len(mean_len, n_steps)
    return _rect_mask(
        n_series, n_steps, p, seed,
        time_span=_span_bounds(mean_len),
        series_span=(1, 1),
    )


def spatial_block_mask(
    n_series: int, n_steps: int, p: float, mean_len: int, seed: int, width: int = 1
) -> MaskMatrix:
    """Contiguous series ranges dropped at narrow timestamp columns."""
    _check_block_len(mean_len, n_steps)
    if width < 1:
        raise InvalidSpec("column width must be >= 1")
    return _rect_mask(
        n_series, n_steps, p, seed,
        time_span=(1, width),
        series_span=_span_bounds(mean_len),
    )


def generate_mask(spec: MissingSpec, n_series: int, n_steps: int) -> MaskMatrix:
    """Dispatch a MissingSpec to its generator."""
    if spec.pattern is MissingPattern.POINT:
        return point_mask(n_series, n_steps, spec.rate, spec.seed)
    if spec.pattern is MissingPattern.BLOCK:
        return block_mask(n_series, n_steps, spec.rate, spec.mean_block_len, spec.seed)
    if spec.pattern is MissingPattern.TEMPORAL_BLOCK:
        return temporal_block_mask(n_series, n_steps, spec.rate, spec.mean_block_len, spec.seed)
    return spatial_block_mask(
        n_series, n_steps, spec.rate, spec.mean_block_len, spec.seed, spec.spatial_width
    )
