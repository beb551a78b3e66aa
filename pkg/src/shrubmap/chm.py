"""Canopy height models from point clouds, and shrubland label rasters.

The CHM cell statistic is the maximum return height falling inside the
cell (point-to-raster, highest return); empty cells are nodata. The
shrub rule keeps cells with height in [min, max] inclusive, then a
block-majority aggregation produces the coarse labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import UsageError
from .pointcloud import PointCloud
from .raster import (
    DEFAULT_NODATA,
    DTYPE_FLOAT32,
    GridTransform,
    Raster,
    aggregate_majority,
    bool_raster,
    float32_raster,
)

COARSE_FACTOR = 30


@dataclass(frozen=True)
class ShrubRule:
    """Canopy height band, in meters, that counts as shrubland."""

    min_height_m: float = 1.0
    max_height_m: float = 5.0

    def __post_init__(self):
        if not 0 < self.min_height_m < self.max_height_m:
            raise UsageError(
                f"need 0 < min < max, got [{self.min_height_m}, {self.max_height_m}]"
            )


def _bin_cloud(accum: np.ndarray, cloud: PointCloud, transform: GridTransform) -> None:
    cols = np.floor((cloud.x - transform.origin_x) / transform.resolution).astype(np.int64)
    rows = np.floor((transform.origin_y - cloud.y) / transform.resolution).astype(np.int64)
    inside = (cols >= 0) & (cols < transform.width) & (rows >= 0) & (rows < transform.height)
    keys = rows[inside] * transform.width + cols[inside]
    _kernels.max_bin(keys, np.ascontiguousarray(cloud.h[inside]), accum)


def build_chm(cloud: PointCloud, transform: GridTransform,
              nodata: float = DEFAULT_NODATA) -> Raster:
    """Max-height raster of the returns; cells with no returns are nodata."""
    chm = build_chm_streaming([cloud], transform, nodata)
    return chm


def build_chm_streaming(clouds, transform: GridTransform,
                        nodata: float = DEFAULT_NODATA) -> Raster:
    """build_chm over an iterable of PointCloud chunks (bounded memory)."""
    accum = np.full(transform.width * transform.height, -np.inf, dtype=np.float32)
    for chunk in clouds:
        if len(chunk):
            _bin_cloud(accum, chunk, transform)
    cells = accum.reshape(transform.height, transform.width)
    cells = np.where(np.isneginf(cells), np.float32(nodata), cells)
    return float32_raster(transform, cells, nodata)


def label_shrub_fine(chm: Raster, rule: ShrubRule = ShrubRule()) -> Raster:
    """True where the CHM height lies in the shrub band; nodata is false."""
    if chm.dtype != DTYPE_FLOAT32:
        raise UsageError("label_shrub_fine expects a float32 CHM")
    valid = chm.valid_mask()
    labels = valid & (chm.cells >= rule.min_height_m) & (chm.cells <= rule.max_height_m)
    return bool_raster(chm.transform, labels)


def label_shrub_coarse(fine_labels: Raster, factor: int = COARSE_FACTOR,
                       threshold_fraction: float = 0.5) -> Raster:
    """Aggregate fine labels to the coarse grid by strict majority."""
    return aggregate_majority(fine_labels, factor, threshold_fraction)
