"""Height-normalized LiDAR-like point clouds and the SPTS container.

Returns carry (x, y, h) with h = height above ground in meters; ground
classification and normalization happen upstream and are out of scope.

SPTS layout: magic "SPTS", one version byte, uint64 record count, then
records of float64 x, float64 y, float32 h, all little-endian.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, UsageError

MAGIC = b"SPTS"
VERSION = 1

_RECORD = np.dtype([("x", "<f8"), ("y", "<f8"), ("h", "<f4")])
_HEADER = struct.Struct("<4sBQ")


@dataclass
class PointCloud:
    """Column arrays of returns. All three arrays share one length."""

    x: np.ndarray
    y: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.float64)
        self.y = np.ascontiguousarray(self.y, dtype=np.float64)
        self.h = np.ascontiguousarray(self.h, dtype=np.float32)
        if not (self.x.shape == self.y.shape == self.h.shape):
            raise UsageError("x, y, h arrays must have equal length")
        if self.h.size and float(self.h.min()) < 0:
            raise UsageError("returns must be height-normalized: h >= 0")

    def __len__(self):
        return self.x.size

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.empty(0), np.empty(0), np.empty(0, dtype=np.float32))


def splat_returns(cloud: PointCloud, pulse_width_m: float = 0.5,
                  points_per_circle: int = 8) -> PointCloud:
    """Replace each return with itself plus `points_per_circle` copies
    equally spaced on a circle of diameter `pulse_width_m` around it,
    reflecting the 2-D footprint of a pulse and filling raster voids.

    Output order: each input return's group is contiguous, original first.
    """
    if pulse_width_m <= 0:
        raise UsageError(f"pulse_width_m must be > 0, got {pulse_width_m}")
    if points_per_circle < 3:
        raise UsageError(f"points_per_circle must be >= 3, got {points_per_circle}")
    n = len(cloud)
    if n == 0:
        return PointCloud.empty()
    k = points_per_circle
    radius = pulse_width_m / 2.0
    angles = 2.0 * np.pi * np.arange(k) / k
    dx = np.r_[0.0, radius * np.cos(angles)]
    dy = np.r_[0.0, radius * np.sin(angles)]
    x = (cloud.x[:, None] + dx[None, :]).ravel()
    y = (cloud.y[:, None] + dy[None, :]).ravel()
    h = np.repeat(cloud.h, k + 1)
    return PointCloud(x, y, h)


def write_spts(cloud: PointCloud, path) -> None:
    """Write a cloud to SPTS. Deterministic bytes for identical input."""
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, len(cloud)))
        _write_records(fh, cloud)


def _write_records(fh, cloud: PointCloud) -> None:
    rec = np.empty(len(cloud), dtype=_RECORD)
    rec["x"] = cloud.x
    rec["y"] = cloud.y
    rec["h"] = cloud.h
    fh.write(rec.tobytes())


class SptsWriter:
    """Incremental SPTS writer for clouds too large to hold in memory.

    Records are appended chunk by chunk; the count field is back-patched
    on close.
    """

    def __init__(self, path):
        self._fh = open(path, "wb")
        self._count = 0
        self._fh.write(_HEADER.pack(MAGIC, VERSION, 0))

    def append(self, cloud: PointCloud) -> None:
        _write_records(self._fh, cloud)
        self._count += len(cloud)

    def close(self) -> None:
        self._fh.seek(0)
        self._fh.write(_HEADER.pack(MAGIC, VERSION, self._count))
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def read_spts(path) -> PointCloud:
    """Read a whole SPTS file into memory."""
    chunks = list(read_spts_chunks(path, chunk_size=None))
    if not chunks:
        return PointCloud.empty()
    if len(chunks) == 1:
        return chunks[0]
    return PointCloud(
        np.concatenate([c.x for c in chunks]),
        np.concatenate([c.y for c in chunks]),
        np.concatenate([c.h for c in chunks]),
    )


def read_spts_chunks(path, chunk_size=4_000_000):
    """Yield PointCloud chunks of at most `chunk_size` returns
    (chunk_size=None reads everything as one chunk)."""
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated SPTS header")
        magic, version, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        remaining = count
        step = count if chunk_size is None else chunk_size
        while remaining > 0:
            take = min(step, remaining)
            raw = fh.read(take * _RECORD.itemsize)
            if len(raw) != take * _RECORD.itemsize:
                raise FormatError(f"{path}: truncated records ({remaining} missing)")
            rec = np.frombuffer(raw, dtype=_RECORD)
            yield PointCloud(rec["x"].copy(), rec["y"].copy(), rec["h"].copy())
            remaining -= take
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} records")
