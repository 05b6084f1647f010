"""Grid reduction pipelines: strided downsampling and 4D average pooling."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid4 import Grid4, GridDType


class DownscaleMode(str, Enum):
    STRIDE = "stride"
    AVGPOOL = "avgpool"


@dataclass(frozen=True)
class DownscaleConfig:
    mode: DownscaleMode = DownscaleMode.STRIDE
    factor: int = 4
    #: re-binarization threshold for pooled output; None keeps Float32
    threshold: float | None = None

    def __post_init__(self):
        if self.factor < 1:
            raise ValueError(f"factor must be >= 1, got {self.factor}")
        if self.threshold is not None and not 0.0 < self.threshold < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")


def _check_divisible(grid: Grid4, factor: int) -> None:
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    for d in grid.dims:
        if d % factor:
            raise ValueError(f"factor {factor} does not divide dims {grid.dims}")


def downsample(grid: Grid4, factor: int) -> Grid4:
    """Keep the toxel at every ``factor``-th coordinate on each axis (offset 0)."""
    _check_divisible(grid, factor)
    data = grid.data[::factor, ::factor, ::factor, ::factor].copy()
    return Grid4(data, grid.dtype)


def avgpool(grid: Grid4, factor: int) -> Grid4:
    """Mean over non-overlapping factor^4 blocks; binary input becomes grey-scale."""
    _check_divisible(grid, factor)
    f = factor
    dx, dy, dz, dw = grid.dims
    blocks = grid.data.reshape(dx // f, f, dy // f, f, dz // f, f, dw // f, f)
    # accumulate in float64 so the global mean is preserved to float32 precision
    pooled = blocks.astype(np.float64).mean(axis=(1, 3, 5, 7))
    return Grid4(pooled.astype(np.float32), GridDType.FLOAT32)


def binarize(grid: Grid4, threshold: float = 0.5) -> Grid4:
    """1 where the value reaches ``threshold``, else 0."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    data = (np.asarray(grid.data, dtype=np.float64) >= threshold).astype(np.uint8)
    return Grid4(data, GridDType.BINARY8)


def apply(config: DownscaleConfig, grid: Grid4) -> Grid4:
    """Run one configured reduction; pooled output is re-binarized only when
    the config carries a threshold."""
    if DownscaleMode(config.mode) is DownscaleMode.STRIDE:
        return downsample(grid, config.factor)
    pooled = avgpool(grid, config.factor)
    if config.threshold is not None:
        return binarize(pooled, config.threshold)
    return pooled
