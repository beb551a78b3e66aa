"""Spectral indices: normalized burn ratio and the tasseled cap transform.

Band order everywhere: (blue, green, red, nir, swir1, swir2) surface
reflectances. The tasseled cap coefficients are configuration data; the
defaults below are a reflectance-calibrated table, and every consumer
accepts alternatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

BAND_NAMES = ("blue", "green", "red", "nir", "swir1", "swir2")


@dataclass(frozen=True)
class TasseledCapCoefficients:
    """Three 6-vectors over (blue, green, red, nir, swir1, swir2)."""

    brightness: tuple
    greenness: tuple
    wetness: tuple

    def __post_init__(self):
        for name in ("brightness", "greenness", "wetness"):
            vec = getattr(self, name)
            if len(vec) != 6:
                raise UsageError(f"{name} must have 6 coefficients, got {len(vec)}")

    def matrix(self) -> np.ndarray:
        """(3, 6) array: rows brightness, greenness, wetness."""
        return np.array([self.brightness, self.greenness, self.wetness], dtype=np.float64)


# Crist (1985) reflectance-space coefficients for TM-like bands.
DEFAULT_TASSELED_CAP = TasseledCapCoefficients(
    brightness=(0.2043, 0.4158, 0.5524, 0.5741, 0.3124, 0.2303),
    greenness=(-0.1603, -0.2819, -0.4934, 0.7940, -0.0002, -0.1446),
    wetness=(0.0315, 0.2021, 0.3102, 0.1594, -0.6806, -0.6109),
)


def nbr(nir, swir2):
    """(nir - swir2) / (nir + swir2); NaN where the denominator is zero.

    Accepts scalars or arrays; bounded in [-1, 1] for nonnegative inputs.
    """
    nir = np.asarray(nir, dtype=np.float64)
    swir2 = np.asarray(swir2, dtype=np.float64)
    denom = nir + swir2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(denom != 0, (nir - swir2) / denom, np.nan)
    if out.ndim == 0:
        return float(out)
    return out


def tasseled_cap(bands, coeffs: TasseledCapCoefficients = DEFAULT_TASSELED_CAP):
    """Brightness, greenness, wetness linear combinations of the 6 bands.

    bands: array-like with the band axis last, length 6.
    Returns (tcb, tcg, tcw) with the band axis contracted away.
    """
    arr = np.asarray(bands, dtype=np.float64)
    if arr.shape[-1] != 6:
        raise UsageError(f"expected 6 bands on the last axis, got {arr.shape[-1]}")
    out = arr @ coeffs.matrix().T
    tcb, tcg, tcw = out[..., 0], out[..., 1], out[..., 2]
    if arr.ndim == 1:
        return float(tcb), float(tcg), float(tcw)
    return tcb, tcg, tcw
