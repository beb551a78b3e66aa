"""Raster data model, SRAS file format, masking and block-majority aggregation.

Grid convention: the origin is the top-left corner of the grid, x grows
east (with column index) and y decreases downward (with row index).
Pixel (col, row) has its center at
(origin_x + (col + 0.5) * resolution, origin_y - (row + 0.5) * resolution).

SRAS is a deliberately tiny single-band format: little-endian, row-major,
uncompressed, so files are byte-reproducible and trivial to re-read from
any language.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentError, DimensionError, FormatError, UsageError

MAGIC = b"SRAS"
VERSION = 1

DTYPE_FLOAT32 = "float32"
DTYPE_UINT8 = "uint8"
DTYPE_BOOL = "bool"

_DTYPE_CODES = {DTYPE_FLOAT32: 1, DTYPE_UINT8: 2, DTYPE_BOOL: 3}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}
_NUMPY_DTYPES = {
    DTYPE_FLOAT32: np.dtype("<f4"),
    DTYPE_UINT8: np.dtype("u1"),
    DTYPE_BOOL: np.dtype("u1"),
}

DEFAULT_NODATA = -9999.0

# Land cover class codes used throughout (primary and secondary bands).
LC_DEVELOPED = 1
LC_CROPLAND = 2
LC_GRASS_SHRUB = 3
LC_TREE_COVER = 4
LC_WATER = 5
LC_WETLAND = 6
LC_ICE_SNOW = 7
LC_BARREN = 8

NONVEGETATED_CLASSES = frozenset({LC_DEVELOPED, LC_WATER, LC_ICE_SNOW, LC_BARREN})

_HEADER = struct.Struct("<4sBBHIIdddd")  # magic, ver, dtype, reserved, w, h, res, ox, oy, nodata


@dataclass(frozen=True)
class GridTransform:
    """Placement of a rectangular pixel grid in map coordinates (meters)."""

    origin_x: float
    origin_y: float
    resolution: float
    width: int
    height: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise UsageError(f"resolution must be > 0, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise UsageError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    def pixel_center(self, col, row):
        """Map coordinates of the center of pixel (col, row)."""
        return (
            self.origin_x + (col + 0.5) * self.resolution,
            self.origin_y - (row + 0.5) * self.resolution,
        )

    def map_to_pixel(self, x, y):
        """(col, row) of the pixel containing map point (x, y); may be out of bounds."""
        col = math.floor((x - self.origin_x) / self.resolution)
        row = math.floor((self.origin_y - y) / self.resolution)
        return col, row

    def coarsen(self, factor: int) -> "GridTransform":
        """Transform of the grid aggregated by an integer block factor."""
        if self.width % factor or self.height % factor:
            raise DimensionError(
                f"grid {self.width}x{self.height} not divisible by factor {factor}"
            )
        return GridTransform(
            self.origin_x,
            self.origin_y,
            self.resolution * factor,
            self.width // factor,
            self.height // factor,
        )


@dataclass
class Raster:
    """One georeferenced band. `cells` is a (height, width) numpy array.

    float32 rasters mark missing cells with `nodata`; uint8 categorical
    rasters use int(nodata); boolean rasters have no missing state.
    """

    transform: GridTransform
    dtype: str
    nodata: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.dtype not in _DTYPE_CODES:
            raise UsageError(f"unsupported raster dtype {self.dtype!r}")
        expected = _NUMPY_DTYPES[self.dtype] if self.dtype != DTYPE_BOOL else np.dtype(bool)
        cells = np.asarray(self.cells)
        if self.dtype == DTYPE_BOOL and cells.dtype != bool:
            cells = cells.astype(bool)
        elif self.dtype != DTYPE_BOOL:
            cells = np.ascontiguousarray(cells, dtype=expected)
        if cells.shape != (self.transform.height, self.transform.width):
            raise DimensionError(
                f"cells shape {cells.shape} does not match grid "
                f"{self.transform.height}x{self.transform.width}"
            )
        self.cells = cells
        self.cells.flags.writeable = False

    @property
    def width(self):
        return self.transform.width

    @property
    def height(self):
        return self.transform.height

    def valid_mask(self) -> np.ndarray:
        """Boolean array: True where the cell holds data."""
        if self.dtype == DTYPE_BOOL:
            return np.ones(self.cells.shape, dtype=bool)
        if self.dtype == DTYPE_UINT8:
            return self.cells != int(self.nodata) % 256
        return self.cells != np.float32(self.nodata)

    def with_cells(self, cells: np.ndarray) -> "Raster":
        return Raster(self.transform, self.dtype, self.nodata, cells)


@dataclass(frozen=True)
class MaskSpec:
    """Which pixels are excluded from labeling and prediction."""

    excluded_classes: frozenset = frozenset(NONVEGETATED_CLASSES)
    max_elevation_m: float = 1067.0


def float32_raster(transform, cells, nodata=DEFAULT_NODATA):
    return Raster(transform, DTYPE_FLOAT32, nodata, cells)


def uint8_raster(transform, cells, nodata=255):
    return Raster(transform, DTYPE_UINT8, nodata, cells)


def bool_raster(transform, cells):
    return Raster(transform, DTYPE_BOOL, 0.0, cells)


def write_raster(raster: Raster, path) -> None:
    """Write `raster` to `path` in SRAS format. Deterministic byte-for-byte."""
    t = raster.transform
    header = _HEADER.pack(
        MAGIC,
        VERSION,
        _DTYPE_CODES[raster.dtype],
        0,
        t.width,
        t.height,
        t.resolution,
        t.origin_x,
        t.origin_y,
        float(raster.nodata),
    )
    if raster.dtype == DTYPE_BOOL:
        payload = raster.cells.astype("u1")
    else:
        payload = raster.cells.astype(_NUMPY_DTYPES[raster.dtype], copy=False)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(payload).tobytes())


def read_raster(path) -> Raster:
    """Read an SRAS file. Round-trips write_raster byte-for-byte."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic, version, dtype_code, _reserved, width, height, res, ox, oy, nodata = (
            _HEADER.unpack(header)
        )
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if dtype_code not in _CODE_DTYPES:
            raise FormatError(f"{path}: unknown dtype code {dtype_code}")
        dtype = _CODE_DTYPES[dtype_code]
        np_dtype = _NUMPY_DTYPES[dtype]
        n = width * height
        raw = fh.read(n * np_dtype.itemsize + 1)
    if len(raw) != n * np_dtype.itemsize:
        raise FormatError(
            f"{path}: cell payload has {len(raw)} bytes, expected {n * np_dtype.itemsize}"
        )
    cells = np.frombuffer(raw, dtype=np_dtype).reshape(height, width)
    if dtype == DTYPE_BOOL:
        cells = cells.astype(bool)
    transform = GridTransform(ox, oy, res, width, height)
    return Raster(transform, dtype, nodata, cells)


def same_grid(*rasters) -> GridTransform:
    """Common transform of `rasters`, or AlignmentError if they disagree."""
    t = rasters[0].transform
    for r in rasters[1:]:
        if r.transform != t:
            raise AlignmentError(f"grid mismatch: {r.transform} != {t}")
    return t


def apply_mask(target: Raster, landcover: Raster, dem: Raster, spec: MaskSpec) -> Raster:
    """Set `target` cells to nodata where the primary land cover is excluded
    or the elevation is strictly above the cutoff. Other cells pass through."""
    same_grid(target, landcover, dem)
    if target.dtype == DTYPE_BOOL:
        raise UsageError("boolean rasters have no nodata state to mask into")
    excluded = np.isin(landcover.cells, list(spec.excluded_classes))
    high = dem.valid_mask() & (dem.cells > spec.max_elevation_m)
    out = np.array(target.cells, copy=True)
    if target.dtype == DTYPE_UINT8:
        out[excluded | high] = int(target.nodata) % 256
    else:
        out[excluded | high] = np.float32(target.nodata)
    return target.with_cells(out)


def mask_validity(landcover: Raster, dem: Raster, spec: MaskSpec) -> np.ndarray:
    """Boolean array: True where a pixel survives the mask."""
    same_grid(landcover, dem)
    excluded = np.isin(landcover.cells, list(spec.excluded_classes))
    high = dem.valid_mask() & (dem.cells > spec.max_elevation_m)
    return ~(excluded | high) & landcover.valid_mask() & dem.valid_mask()


def aggregate_majority(fine: Raster, factor: int, threshold_fraction: float = 0.5) -> Raster:
    """Aggregate a boolean raster by `factor`, marking a coarse cell true
    iff strictly more than threshold_fraction of its subpixels are true.

    Subpixels without data count as false: a coarse cell must earn its
    label from positive evidence.
    """
    if fine.dtype != DTYPE_BOOL:
        raise UsageError("aggregate_majority expects a boolean raster")
    if not 0 < threshold_fraction < 1:
        raise UsageError(f"threshold_fraction must be in (0,1), got {threshold_fraction}")
    if factor < 1:
        raise UsageError(f"factor must be positive, got {factor}")
    t = fine.transform
    if t.width % factor or t.height % factor:
        raise DimensionError(
            f"raster {t.width}x{t.height} not divisible by factor {factor}"
        )
    ch, cw = t.height // factor, t.width // factor
    counts = (
        fine.cells.reshape(ch, factor, cw, factor)
        .sum(axis=(1, 3), dtype=np.int64)
    )
    coarse = counts > threshold_fraction * factor * factor
    return Raster(t.coarsen(factor), DTYPE_BOOL, 0.0, coarse)
