"""The aligned predictor cube and its assembly from inputs.

Band schema (18 stored bands): epoch-fitted indices TCB/TCW/TCG/NBR and
their 1-year-lag deltas, disturbance MAG/YOD, climate normals
PRECIP/TMAX/TMIN, terrain ELEVATION/ASPECT/SLOPE/TWI, and the secondary
land-cover class LCSEC. Models consume a configurable subset; the
default feature list is the 14 predictor names of the definitions table
(deltas are stored but not default model inputs). YOD is 0 where no
disturbance was found. A pixel that fails the land-cover/elevation mask,
or has any undefined input (flat-cell aspect, non-finite index), is
nodata in every band.

A stack on disk is a directory of single-band SRAS files plus a
`manifest.txt` of `name=path` lines (paths relative to the manifest).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from . import indices, segmentation, terrain
from .errors import DataError, UsageError
from .raster import (
    DEFAULT_NODATA,
    DTYPE_UINT8,
    GridTransform,
    MaskSpec,
    Raster,
    float32_raster,
    mask_validity,
    read_raster,
    same_grid,
    uint8_raster,
    write_raster,
)

STACK_BANDS = (
    "TCB", "TCW", "TCG", "NBR",
    "dTCB", "dTCW", "dTCG", "dNBR",
    "MAG", "YOD",
    "PRECIP", "TMAX", "TMIN",
    "ELEVATION", "ASPECT", "SLOPE", "TWI",
    "LCSEC",
)

DEFAULT_MODEL_FEATURES = (
    "TCB", "TCW", "TCG", "NBR",
    "MAG", "YOD",
    "PRECIP", "TMAX", "TMIN",
    "ELEVATION", "ASPECT", "SLOPE", "TWI",
    "LCSEC",
)

CATEGORICAL_FEATURES = ("LCSEC",)

REFLECTANCE_PREFIX = "REFL"
INPUT_STEADY_BANDS = ("PRECIP", "TMAX", "TMIN", "DEM", "LCPRI", "LCSEC")


@dataclass
class StackInputs:
    """Aligned raw inputs for one epoch's predictor stack."""

    years: np.ndarray                 # shared annual grid
    reflectance: np.ndarray           # (n_years, 6, H, W) float32
    precip: Raster
    tmax: Raster
    tmin: Raster
    dem: Raster
    landcover: Raster                 # primary classes, for masking
    lcsec: Raster

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=np.int64)
        t = same_grid(self.precip, self.tmax, self.tmin, self.dem,
                      self.landcover, self.lcsec)
        expected = (self.years.size, 6, t.height, t.width)
        if self.reflectance.shape != expected:
            raise DataError(
                f"reflectance shape {self.reflectance.shape}, expected {expected}"
            )

    @property
    def transform(self) -> GridTransform:
        return self.precip.transform


@dataclass
class PredictorStack:
    """The aligned predictor bands for one epoch."""

    epoch: int
    bands: dict = field(repr=False)

    def __post_init__(self):
        missing = [b for b in STACK_BANDS if b not in self.bands]
        if missing:
            raise DataError(f"stack missing bands: {missing}")
        same_grid(*[self.bands[b] for b in STACK_BANDS])

    @property
    def transform(self) -> GridTransform:
        return self.bands[STACK_BANDS[0]].transform

    def valid_mask(self) -> np.ndarray:
        out = np.ones((self.transform.height, self.transform.width), dtype=bool)
        for name in STACK_BANDS:
            out &= self.bands[name].valid_mask()
        return out

    def feature_matrix(self, feature_names=DEFAULT_MODEL_FEATURES,
                       pixels=None) -> np.ndarray:
        """(n_pixels, n_features) float32 matrix in feature-list order.

        `pixels` is an (rows, cols) index pair; defaults to all valid
        pixels in row-major order.
        """
        if pixels is None:
            rows, cols = np.nonzero(self.valid_mask())
        else:
            rows, cols = pixels
        out = np.empty((rows.size, len(feature_names)), dtype=np.float32)
        for j, name in enumerate(feature_names):
            if name not in self.bands:
                raise UsageError(f"unknown feature band {name!r}")
            out[:, j] = self.bands[name].cells[rows, cols]
        return out


def assemble_stack(inputs: StackInputs, epoch: int,
                   max_segments: int = segmentation.DEFAULT_MAX_SEGMENTS,
                   disturbance_threshold: float = segmentation.DEFAULT_DISTURBANCE_THRESHOLD,
                   mask_spec: MaskSpec = MaskSpec(),
                   tc_coeffs: indices.TasseledCapCoefficients = indices.DEFAULT_TASSELED_CAP,
                   ) -> PredictorStack:
    """Build the predictor cube for one epoch.

    Index series are segmented per pixel: the NBR series picks the
    vertices, the three tasseled cap series are refit to those vertices,
    and epoch values/deltas are read off the fitted curves.
    """
    years = inputs.years
    if not (years[0] < epoch <= years[-1]):
        raise UsageError(
            f"epoch {epoch} must lie in ({years[0]}, {years[-1]}] "
            "(a 1-year lag delta needs the preceding year)"
        )
    t = inputs.transform
    h, w = t.height, t.width

    valid = mask_validity(inputs.landcover, inputs.dem, mask_spec)
    for r in (inputs.precip, inputs.tmax, inputs.tmin, inputs.lcsec):
        valid &= r.valid_mask()

    slope_r, aspect_r = terrain.slope_aspect(inputs.dem)
    twi_r = terrain.twi(inputs.dem)
    valid &= aspect_r.valid_mask()

    rows, cols = np.nonzero(valid)
    refl = inputs.reflectance[:, :, rows, cols].astype(np.float64)  # (Y, 6, P)
    nbr_series = indices.nbr(refl[:, 3], refl[:, 5])                # (Y, P)
    tc = np.einsum("cb,ybp->cyp", tc_coeffs.matrix(), refl)
    tcb_series, tcg_series, tcw_series = tc[0], tc[1], tc[2]

    finite = np.isfinite(nbr_series).all(axis=0)
    for s in (tcb_series, tcg_series, tcw_series):
        finite &= np.isfinite(s).all(axis=0)
    if not finite.all():
        keep = np.flatnonzero(finite)
        valid[rows[~finite], cols[~finite]] = False
        rows, cols = rows[keep], cols[keep]
        nbr_series = nbr_series[:, keep]
        tcb_series, tcg_series, tcw_series = (
            tcb_series[:, keep], tcg_series[:, keep], tcw_series[:, keep])

    seg = segmentation.SharedGridSegmenter(years, max_segments)
    winner, _ = seg.segment(nbr_series.T)
    eval_years = np.array([epoch - 1, epoch])

    def fit_band(series):
        coefs = seg.coefs_for(series.T, winner)
        fitted = seg.fitted_at(winner, coefs, eval_years)
        return coefs, fitted[:, 1], fitted[:, 1] - fitted[:, 0]

    nbr_coefs, nbr_fit, nbr_delta = fit_band(nbr_series)
    _, tcb_fit, tcb_delta = fit_band(tcb_series)
    _, tcg_fit, tcg_delta = fit_band(tcg_series)
    _, tcw_fit, tcw_delta = fit_band(tcw_series)
    yod, mag = seg.disturbances(winner, nbr_coefs, disturbance_threshold)

    def band_from(vec) -> Raster:
        cells = np.full((h, w), DEFAULT_NODATA, dtype=np.float32)
        cells[rows, cols] = vec
        return float32_raster(t, cells)

    def passthrough(raster: Raster) -> Raster:
        if raster.dtype == DTYPE_UINT8:
            cells = np.where(valid, raster.cells, int(raster.nodata) % 256)
            return uint8_raster(t, cells.astype(np.uint8), raster.nodata)
        cells = np.where(valid, raster.cells, np.float32(DEFAULT_NODATA))
        return float32_raster(t, cells)

    bands = {
        "TCB": band_from(tcb_fit),
        "TCW": band_from(tcw_fit),
        "TCG": band_from(tcg_fit),
        "NBR": band_from(nbr_fit),
        "dTCB": band_from(tcb_delta),
        "dTCW": band_from(tcw_delta),
        "dTCG": band_from(tcg_delta),
        "dNBR": band_from(nbr_delta),
        "MAG": band_from(mag),
        "YOD": band_from(yod.astype(np.float64)),
        "PRECIP": passthrough(inputs.precip),
        "TMAX": passthrough(inputs.tmax),
        "TMIN": passthrough(inputs.tmin),
        "ELEVATION": passthrough(inputs.dem),
        "ASPECT": passthrough(aspect_r),
        "SLOPE": passthrough(slope_r),
        "TWI": passthrough(twi_r),
        "LCSEC": passthrough(inputs.lcsec),
    }
    return PredictorStack(epoch=epoch, bands=bands)


def read_manifest(path) -> dict:
    """Parse `name=value` lines into a dict (values are raw strings)."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected name=value, got {line!r}")
            name, value = line.split("=", 1)
            out[name.strip()] = value.strip()
    return out


def _resolve(manifest_path, value) -> str:
    base = os.path.dirname(os.path.abspath(manifest_path))
    return os.path.join(base, value)


def load_inputs(manifest_path) -> StackInputs:
    """Load StackInputs from a manifest listing REFL_<year>_<band> lines
    plus PRECIP, TMAX, TMIN, DEM, LCPRI and LCSEC."""
    entries = read_manifest(manifest_path)
    missing = [b for b in INPUT_STEADY_BANDS if b not in entries]
    if missing:
        raise DataError(f"{manifest_path}: missing bands {missing}")

    refl_keys = {}
    for name in entries:
        if name.startswith(REFLECTANCE_PREFIX + "_"):
            parts = name.split("_")
            if len(parts) != 3 or parts[2] not in indices.BAND_NAMES:
                raise DataError(f"{manifest_path}: bad reflectance key {name!r}")
            refl_keys.setdefault(int(parts[1]), {})[parts[2]] = entries[name]
    if not refl_keys:
        raise DataError(f"{manifest_path}: no {REFLECTANCE_PREFIX}_<year>_<band> entries")
    years = np.array(sorted(refl_keys), dtype=np.int64)
    for year in years:
        have = refl_keys[int(year)]
        lacking = [b for b in indices.BAND_NAMES if b not in have]
        if lacking:
            raise DataError(f"{manifest_path}: year {year} missing bands {lacking}")

    steady = {name: read_raster(_resolve(manifest_path, entries[name]))
              for name in INPUT_STEADY_BANDS}
    t = steady["PRECIP"].transform
    refl = np.empty((years.size, 6, t.height, t.width), dtype=np.float32)
    for yi, year in enumerate(years):
        for bi, band in enumerate(indices.BAND_NAMES):
            r = read_raster(_resolve(manifest_path, refl_keys[int(year)][band]))
            same_grid(steady["PRECIP"], r)
            refl[yi, bi] = r.cells
    return StackInputs(
        years=years,
        reflectance=refl,
        precip=steady["PRECIP"],
        tmax=steady["TMAX"],
        tmin=steady["TMIN"],
        dem=steady["DEM"],
        landcover=steady["LCPRI"],
        lcsec=steady["LCSEC"],
    )


def write_stack(stack: PredictorStack, out_dir) -> str:
    """Write each band as SRAS plus a manifest; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.txt")
    lines = [f"EPOCH={stack.epoch}"]
    for name in STACK_BANDS:
        fname = f"{name}.sras"
        write_raster(stack.bands[name], os.path.join(out_dir, fname))
        lines.append(f"{name}={fname}")
    with open(manifest, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def read_stack(stack_dir) -> PredictorStack:
    """Read a stack directory written by write_stack."""
    manifest = os.path.join(stack_dir, "manifest.txt")
    if not os.path.exists(manifest):
        raise DataError(f"{stack_dir}: no manifest.txt")
    entries = read_manifest(manifest)
    if "EPOCH" not in entries:
        raise DataError(f"{manifest}: missing EPOCH")
    epoch = int(entries.pop("EPOCH"))
    bands = {}
    for name in STACK_BANDS:
        if name not in entries:
            raise DataError(f"{manifest}: missing band {name}")
        bands[name] = read_raster(_resolve(manifest, entries[name]))
    return PredictorStack(epoch=epoch, bands=bands)
