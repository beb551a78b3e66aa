"""Temporal segmentation of annual index series.

A series is approximated by a continuous piecewise-linear curve whose
breakpoints (vertices) sit at observed years. For a fixed set of vertex
years the curve is the least-squares fit over the hat-function basis;
vertex years themselves are chosen by exact exhaustive search over all
subsets of interior years with at most `max_segments` segments,
minimizing the fit SSE. Ties go to fewer vertices, then to the
lexicographically earliest vertex years. Cost grows combinatorially in
series length and max_segments; intended for short annual series.

The same machinery fills gap years (interpolation), smooths interannual
noise, and exposes the most recent index drop as a disturbance
(year-of-disturbance and magnitude).
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import UsageError

# Two candidate vertex sets whose SSEs differ by less than this (scaled
# by the series energy) are considered tied.
TIE_TOL_REL = 1e-9

DEFAULT_DISTURBANCE_THRESHOLD = 0.05
DEFAULT_MAX_SEGMENTS = 6


@dataclass
class AnnualSeries:
    """Yearly index observations; gaps are encoded as absent years."""

    years: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.years = np.asarray(self.years, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.years.shape != self.values.shape or self.years.ndim != 1:
            raise UsageError("years and values must be equal-length 1-D arrays")
        if self.years.size < 2:
            raise UsageError("a series needs at least 2 observations")
        if not np.all(np.diff(self.years) > 0):
            raise UsageError("years must be strictly increasing")


@dataclass
class SegmentedFit:
    """Piecewise-linear fit of a series.

    `years` spans every integer year from first to last observation;
    `fitted` holds the curve at each of those years (gap years included).
    """

    years: np.ndarray
    vertex_years: np.ndarray
    vertex_values: np.ndarray
    fitted: np.ndarray
    sse: float

    def value_at(self, year: int) -> float:
        idx = int(year) - int(self.years[0])
        if idx < 0 or idx >= self.years.size:
            raise UsageError(f"year {year} outside fitted range")
        return float(self.fitted[idx])


@dataclass(frozen=True)
class Disturbance:
    """Most recent segment with a value drop above threshold, if any."""

    yod: Optional[int]
    mag: float


def hat_basis(eval_years: np.ndarray, vertex_years: np.ndarray) -> np.ndarray:
    """(len(eval_years), n_vertices) matrix of piecewise-linear hat
    functions anchored at vertex_years. Rows at vertex years are unit
    vectors, so fitted curves interpolate their vertices exactly."""
    ey = np.asarray(eval_years, dtype=np.float64)
    vy = np.asarray(vertex_years, dtype=np.float64)
    seg = np.clip(np.searchsorted(vy, ey, side="right") - 1, 0, vy.size - 2)
    span = vy[seg + 1] - vy[seg]
    frac = (ey - vy[seg]) / span
    basis = np.zeros((ey.size, vy.size))
    rows = np.arange(ey.size)
    basis[rows, seg] = 1.0 - frac
    basis[rows, seg + 1] += frac
    return basis


def _interior_subsets(n_years: int, max_segments: int):
    """Canonically ordered interior-vertex index tuples: fewer vertices
    first, then lexicographic."""
    max_interior = min(max_segments - 1, n_years - 2)
    interior = range(1, n_years - 1)
    out = []
    for k in range(max_interior + 1):
        out.extend(combinations(interior, k))
    return out


class SharedGridSegmenter:
    """Segments many series that share one observation-year grid.

    Precomputes, per candidate vertex set, the hat basis and its
    least-squares solver, so per-pixel work is a handful of matmuls.
    """

    def __init__(self, years, max_segments: int = DEFAULT_MAX_SEGMENTS):
        if max_segments < 1:
            raise UsageError(f"max_segments must be >= 1, got {max_segments}")
        self.years = np.asarray(years, dtype=np.int64)
        if self.years.size < 2 or not np.all(np.diff(self.years) > 0):
            raise UsageError("year grid must be >= 2 strictly increasing years")
        n = self.years.size
        self.subsets = [(0,) + s + (n - 1,) for s in _interior_subsets(n, max_segments)]
        self.bases = []
        self.solvers = []
        self.projections = []
        for subset in self.subsets:
            basis = hat_basis(self.years, self.years[list(subset)])
            # Normal equations; full rank because every vertex year is an
            # observed year (unit rows in the basis).
            solver = np.linalg.solve(basis.T @ basis, basis.T)
            self.bases.append(basis)
            self.solvers.append(solver)
            self.projections.append(basis @ solver)

    def _check(self, values) -> np.ndarray:
        values = np.atleast_2d(np.asarray(values, dtype=np.float64))
        if values.shape[1] != self.years.size:
            raise UsageError("values width must match the year grid")
        return values

    def segment(self, values):
        """Choose the best vertex set per series.

        Returns (winner, sse): winner[i] indexes self.subsets.
        """
        values = self._check(values)
        energy = np.einsum("ij,ij->i", values, values)
        sses = np.empty((len(self.subsets), values.shape[0]))
        for si, proj in enumerate(self.projections):
            sses[si] = energy - np.einsum("ij,jk,ik->i", values, proj, values)
        tol = TIE_TOL_REL * (1.0 + energy)
        best = sses.min(axis=0)
        winner = np.argmax(sses <= best[None, :] + tol[None, :], axis=0)
        return winner, sses[winner, np.arange(values.shape[0])]

    def coefs_for(self, values, winner):
        """Least-squares vertex values given each series' chosen vertex
        set; (n_series, max_vertices) padded with NaN."""
        values = self._check(values)
        max_v = max(len(s) for s in self.subsets)
        coefs = np.full((values.shape[0], max_v), np.nan)
        for si, solver in enumerate(self.solvers):
            rows = np.flatnonzero(winner == si)
            if rows.size:
                coefs[rows, : len(self.subsets[si])] = values[rows] @ solver.T
        return coefs

    def fitted_at(self, winner, coefs, eval_years):
        """Fitted curve values at `eval_years` (n_series, len(eval_years))."""
        eval_years = np.asarray(eval_years, dtype=np.int64)
        out = np.full((winner.size, eval_years.size), np.nan)
        for si, subset in enumerate(self.subsets):
            rows = np.flatnonzero(winner == si)
            if rows.size:
                basis = hat_basis(eval_years, self.years[list(subset)])
                out[rows] = coefs[rows, : len(subset)] @ basis.T
        return out

    def disturbances(self, winner, coefs,
                     threshold: float = DEFAULT_DISTURBANCE_THRESHOLD):
        """Most recent drop per series: (yod, mag) arrays, yod 0 = none."""
        yod = np.zeros(winner.size, dtype=np.int64)
        mag = np.zeros(winner.size)
        for si, subset in enumerate(self.subsets):
            rows = np.flatnonzero(winner == si)
            if rows.size == 0:
                continue
            v = len(subset)
            c = coefs[rows, :v]
            drops = c[:, :-1] - c[:, 1:]
            hit = drops > threshold
            has = hit.any(axis=1)
            if not has.any():
                continue
            last = (v - 2) - np.argmax(hit[:, ::-1], axis=1)
            vyears = self.years[list(subset)]
            rr = rows[has]
            yod[rr] = vyears[last[has] + 1]
            mag[rr] = drops[np.flatnonzero(has), last[has]]
        return yod, mag


def segment_series(series: AnnualSeries, max_segments: int) -> SegmentedFit:
    """Best piecewise-linear segmentation of one series."""
    seg = SharedGridSegmenter(series.years, max_segments)
    winner, sse = seg.segment(series.values[None, :])
    subset = seg.subsets[int(winner[0])]
    coef = seg.coefs_for(series.values[None, :], winner)[0, : len(subset)]
    vertex_years = series.years[list(subset)]
    full_years = np.arange(series.years[0], series.years[-1] + 1, dtype=np.int64)
    fitted = hat_basis(full_years, vertex_years) @ coef
    return SegmentedFit(
        years=full_years,
        vertex_years=vertex_years,
        vertex_values=coef,
        fitted=fitted,
        sse=float(sse[0]),
    )


def fit_to_vertices(series: AnnualSeries, vertex_years) -> SegmentedFit:
    """Least-squares piecewise-linear fit of `series` with breakpoints
    fixed at `vertex_years` (which must include the series endpoints)."""
    vy = np.unique(np.asarray(vertex_years, dtype=np.int64))
    if vy[0] != series.years[0] or vy[-1] != series.years[-1]:
        raise UsageError(
            f"vertex years {vy.tolist()} must span the series range "
            f"[{series.years[0]}, {series.years[-1]}]"
        )
    basis = hat_basis(series.years, vy)
    coef, *_ = np.linalg.lstsq(basis, series.values, rcond=None)
    full_years = np.arange(series.years[0], series.years[-1] + 1, dtype=np.int64)
    fitted = hat_basis(full_years, vy) @ coef
    resid = series.values - basis @ coef
    return SegmentedFit(
        years=full_years,
        vertex_years=vy,
        vertex_values=coef,
        fitted=fitted,
        sse=float(resid @ resid),
    )


def disturbance_from_fit(
    fit: SegmentedFit, threshold: float = DEFAULT_DISTURBANCE_THRESHOLD
) -> Disturbance:
    """Most recent segment whose value drop exceeds `threshold`."""
    drops = fit.vertex_values[:-1] - fit.vertex_values[1:]
    hits = np.flatnonzero(drops > threshold)
    if hits.size == 0:
        return Disturbance(yod=None, mag=0.0)
    j = int(hits[-1])
    return Disturbance(yod=int(fit.vertex_years[j + 1]), mag=float(drops[j]))


def delta_lag1(fitted: np.ndarray) -> np.ndarray:
    """One-year lagged differences; the first year has no delta (NaN)."""
    fitted = np.asarray(fitted, dtype=np.float64)
    if fitted.size < 2:
        raise UsageError("need at least 2 fitted years for deltas")
    out = np.empty_like(fitted)
    out[0] = np.nan
    out[1:] = fitted[1:] - fitted[:-1]
    return out
