"""Terrain derivatives from a void-free DEM: slope, aspect, wetness index.

Gradients use Horn's 3x3 kernel with edge replication at borders. Aspect
is the azimuth of the downslope direction, degrees clockwise from north,
nodata on flat cells. The wetness index is ln(a / tan(beta)) with a the
D8 specific catchment area (drained cell count including self, times
cell size) and tan(beta) floored at EPSILON_SLOPE on flats.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, UsageError
from .raster import DEFAULT_NODATA, DTYPE_FLOAT32, Raster, float32_raster

EPSILON_SLOPE = 1e-4

# D8 neighbor scan order (row-major excluding center); ties in steepest
# descent resolve to the first entry.
D8_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def _horn_gradients(dem: Raster):
    if dem.dtype != DTYPE_FLOAT32:
        raise UsageError("terrain derivatives expect a float32 DEM")
    if dem.height < 3 or dem.width < 3:
        raise DimensionError("DEM must be at least 3x3")
    z = np.pad(dem.cells.astype(np.float64), 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    res = dem.transform.resolution
    gx = ((c + 2 * f + i) - (a + 2 * d + g)) / (8 * res)  # east
    gy = ((a + 2 * b + c) - (g + 2 * h + i)) / (8 * res)  # north
    return gx, gy


def slope_aspect(dem: Raster, nodata: float = DEFAULT_NODATA):
    """(slope_deg, aspect_deg) rasters. Aspect is nodata where flat."""
    gx, gy = _horn_gradients(dem)
    slope = np.degrees(np.arctan(np.hypot(gx, gy)))
    flat = (gx == 0) & (gy == 0)
    aspect = np.degrees(np.arctan2(-gx, -gy)) % 360.0
    aspect = np.where(flat, nodata, aspect)
    return (
        float32_raster(dem.transform, slope.astype(np.float32), nodata),
        float32_raster(dem.transform, aspect.astype(np.float32), nodata),
    )


def d8_receivers(dem: Raster) -> np.ndarray:
    """Flat index of each cell's steepest-descent neighbor, or -1 for
    pits/flats (no strictly lower neighbor). Off-grid flow is allowed
    only through the border cells' in-bounds neighbors."""
    z = dem.cells.astype(np.float64)
    rows, cols = z.shape
    best_rate = np.full(z.shape, 0.0)
    receiver = np.full(z.shape, -1, dtype=np.int64)
    res = dem.transform.resolution
    for dr, dc in D8_OFFSETS:
        dist = np.hypot(dr, dc) * res
        shifted = np.full(z.shape, np.inf)
        src = shifted[max(0, -dr):rows - max(0, dr), max(0, -dc):cols - max(0, dc)]
        src[...] = z[max(0, dr):rows - max(0, -dr), max(0, dc):cols - max(0, -dc)]
        rate = (z - shifted) / dist
        better = rate > best_rate
        rr, cc = np.nonzero(better)
        receiver[rr, cc] = (rr + dr) * cols + (cc + dc)
        best_rate = np.where(better, rate, best_rate)
    return receiver.ravel()


def flow_accumulation(dem: Raster) -> np.ndarray:
    """D8 accumulated cell count (each cell contributes itself)."""
    receiver = d8_receivers(dem)
    n = receiver.size
    accum = np.ones(n, dtype=np.int64)
    indegree = np.zeros(n, dtype=np.int64)
    has_rcv = receiver >= 0
    np.add.at(indegree, receiver[has_rcv], 1)
    stack = list(np.flatnonzero(indegree == 0))
    while stack:
        cell = stack.pop()
        rcv = receiver[cell]
        if rcv >= 0:
            accum[rcv] += accum[cell]
            indegree[rcv] -= 1
            if indegree[rcv] == 0:
                stack.append(rcv)
    return accum.reshape(dem.cells.shape)


def twi(dem: Raster, nodata: float = DEFAULT_NODATA) -> Raster:
    """Topographic wetness index ln(a / tan(beta))."""
    gx, gy = _horn_gradients(dem)
    tan_beta = np.maximum(np.hypot(gx, gy), EPSILON_SLOPE)
    area = flow_accumulation(dem) * dem.transform.resolution
    out = np.log(area / tan_beta)
    return float32_raster(dem.transform, out.astype(np.float32), nodata)
