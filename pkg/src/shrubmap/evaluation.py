"""Confusion metrics, ROC/PR areas, threshold calibration, and the
hexagon/probability-bin validation sampling plan.

Classification rule everywhere: a pixel is called shrubland iff its
probability is >= the threshold. Candidate thresholds are the distinct
observed scores plus a +inf sentinel (any other threshold reproduces
some candidate's confusion table). Undefined metrics (zero denominator)
are reported as None, never silently as 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, NumericError, UsageError
from .raster import Raster, same_grid

logger = logging.getLogger(__name__)

# Drawing bins partition (0, 1]; the extreme sub-bins are drawn
# separately and merged into their neighbors for reporting.
DRAW_BIN_EDGES = (0.0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                  0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0)
REPORT_BIN_EDGES = (0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                    0.6, 0.7, 0.8, 0.9, 0.95, 1.0)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class MetricsReport:
    counts: ConfusionCounts
    threshold: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    auc: Optional[float] = None


def confusion(labels, probs, threshold: float) -> ConfusionCounts:
    """Exact confusion counts at one threshold (positive iff p >= t)."""
    labels = np.asarray(labels, dtype=bool)
    probs = np.asarray(probs, dtype=np.float64)
    if labels.shape != probs.shape:
        raise DataError(f"length mismatch: {labels.shape} vs {probs.shape}")
    pred = probs >= threshold
    tp = int(np.count_nonzero(pred & labels))
    fp = int(np.count_nonzero(pred & ~labels))
    fn = int(np.count_nonzero(~pred & labels))
    tn = int(np.count_nonzero(~pred & ~labels))
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def metrics(c: ConfusionCounts, threshold: float = math.nan,
            auc: Optional[float] = None) -> MetricsReport:
    """Sensitivity, specificity, precision and F1 from counts."""
    sens = _ratio(c.tp, c.tp + c.fn)
    spec = _ratio(c.tn, c.fp + c.tn)
    prec = _ratio(c.tp, c.tp + c.fp)
    if prec is None or sens is None or prec + sens == 0:
        f1 = None
    else:
        f1 = 2 * prec * sens / (prec + sens)
    return MetricsReport(counts=c, threshold=threshold, sensitivity=sens,
                         specificity=spec, precision=prec, f1=f1, auc=auc)


def _check_two_classes(labels) -> np.ndarray:
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == labels.size:
        raise NumericError("metric undefined: labels contain a single class")
    return labels


def roc_auc(labels, probs) -> float:
    """Rank-statistic AUC: probability a random positive outranks a
    random negative, ties counted half. Equals trapezoidal ROC area."""
    labels = _check_two_classes(labels)
    probs = np.asarray(probs, dtype=np.float64)
    n = probs.size
    order = np.argsort(probs, kind="stable")
    sp = probs[order]
    bounds = np.flatnonzero(sp[1:] != sp[:-1]) + 1
    starts = np.r_[0, bounds]
    ends = np.r_[bounds, n]
    avg_rank = (starts + ends + 1) / 2.0  # 1-based average rank per tie group
    ranks = np.empty(n)
    ranks[order] = np.repeat(avg_rank, ends - starts)
    n_pos = int(labels.sum())
    n_neg = n - n_pos
    rank_sum = float(ranks[labels].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(labels, probs) -> float:
    """Area under the precision-recall step curve over all thresholds."""
    labels = np.asarray(labels, dtype=bool)
    probs = np.asarray(probs, dtype=np.float64)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NumericError("PR-AUC undefined without positives")
    order = np.argsort(-probs, kind="stable")
    sy = labels[order]
    sp = probs[order]
    cum_tp = np.cumsum(sy)
    group_ends = np.r_[np.flatnonzero(sp[1:] != sp[:-1]), sp.size - 1]
    recall = cum_tp[group_ends] / n_pos
    precision = cum_tp[group_ends] / (group_ends + 1.0)
    prev_recall = np.r_[0.0, recall[:-1]]
    return float(np.sum((recall - prev_recall) * precision))


def _threshold_scan(labels, probs):
    """Candidate thresholds (distinct scores ascending + inf) with their
    sensitivity and specificity."""
    labels = _check_two_classes(labels)
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(probs, kind="stable")
    sp = probs[order]
    sy = labels[order]
    starts = np.r_[0, np.flatnonzero(sp[1:] != sp[:-1]) + 1]
    candidates = np.r_[sp[starts], np.inf]
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    # counts strictly below each candidate (candidate itself predicts positive)
    below = np.r_[starts, labels.size].astype(np.float64)
    pos_below = np.r_[np.cumsum(sy)[starts] - sy[starts], n_pos].astype(np.float64)
    sens = (n_pos - pos_below) / n_pos
    spec = (below - pos_below) / n_neg
    return candidates, sens, spec


def youden_threshold(labels, probs) -> float:
    """Candidate threshold maximizing sensitivity + specificity - 1;
    ties resolve to the higher threshold."""
    candidates, sens, spec = _threshold_scan(labels, probs)
    j = sens + spec - 1.0
    best = j.size - 1 - int(np.argmax(j[::-1]))
    return float(candidates[best])


def specificity_threshold(labels, probs, target: float) -> float:
    """Minimal candidate threshold whose specificity is >= target
    (equivalently: maximal sensitivity subject to the constraint)."""
    if not 0 < target < 1:
        raise UsageError(f"target specificity must be in (0,1), got {target}")
    candidates, _sens, spec = _threshold_scan(labels, probs)
    return float(candidates[int(np.argmax(spec >= target))])


@dataclass(frozen=True)
class ThresholdSet:
    youden: float
    spec90: float
    spec95: float
    spec99: float

    def __post_init__(self):
        if not self.spec90 <= self.spec95 <= self.spec99:
            raise DataError("specificity thresholds must be nondecreasing")

    def as_dict(self):
        return {"youden": self.youden, "spec90": self.spec90,
                "spec95": self.spec95, "spec99": self.spec99}


def calibrate_thresholds(labels, probs, targets=(0.90, 0.95, 0.99)) -> ThresholdSet:
    t90, t95, t99 = (specificity_threshold(labels, probs, t) for t in targets)
    return ThresholdSet(
        youden=youden_threshold(labels, probs),
        spec90=t90, spec95=t95, spec99=t99,
    )


def hex_area(apothem_km: float) -> float:
    """Area (km^2) of a regular hexagon with the given apothem (km)."""
    if apothem_km <= 0:
        raise UsageError(f"apothem must be positive, got {apothem_km}")
    return 2.0 * math.sqrt(3.0) * apothem_km * apothem_km


@dataclass(frozen=True)
class Hexagon:
    hex_id: str
    center_x: float
    center_y: float


@dataclass
class BinSample:
    hex_id: str
    draw_bin: str
    report_bin: str
    target: int
    pixels: list  # (col, row, prob)

    @property
    def shortfall(self):
        return max(0, self.target - len(self.pixels))


@dataclass
class HexValidationPlan:
    apothem_km: float
    per_bin: int
    seed: int
    hexagons: list
    samples: list = field(default_factory=list)

    def total_shortfall(self):
        return sum(s.shortfall for s in self.samples)


def _bin_label(lo: float, hi: float) -> str:
    return f"({lo:g},{hi:g}]"


def _report_bin(lo: float, hi: float) -> str:
    """Reporting bin a draw interval merges into."""
    if hi <= 0.05:
        return _bin_label(0.0, 0.05)
    if lo >= 0.95:
        return _bin_label(0.95, 1.0)
    return _bin_label(lo, hi)


def _axial_round(qf: np.ndarray, rf: np.ndarray):
    """Cube-coordinate rounding of fractional axial hex coordinates."""
    xf, zf = qf, rf
    yf = -xf - zf
    rx, ry, rz = np.round(xf), np.round(yf), np.round(zf)
    dx, dy, dz = np.abs(rx - xf), np.abs(ry - yf), np.abs(rz - zf)
    fix_x = (dx > dy) & (dx > dz)
    fix_z = ~fix_x & (dz > dy)
    rx = np.where(fix_x, -ry - rz, rx)
    rz = np.where(fix_z, -rx - ry, rz)
    return rx.astype(np.int64), rz.astype(np.int64)


def assign_hexagons(prob: Raster, apothem_km: float):
    """Flat-topped hexagon index (q, r axial) of every raster cell,
    anchored at the extent's lower-left corner."""
    t = prob.transform
    apothem = apothem_km * 1000.0
    circum = 2.0 * apothem / math.sqrt(3.0)
    cols = np.arange(t.width)
    rows = np.arange(t.height)
    x = t.origin_x + (cols + 0.5) * t.resolution
    y = t.origin_y - (rows + 0.5) * t.resolution
    min_x = t.origin_x
    min_y = t.origin_y - t.height * t.resolution
    xo = (x - min_x)[None, :]
    yo = (y - min_y)[:, None]
    qf = (2.0 / 3.0) * xo / circum
    rf = (-xo / 3.0 + (math.sqrt(3.0) / 3.0) * yo) / circum
    qf, rf = np.broadcast_arrays(qf, rf)
    q, r = _axial_round(qf, rf)
    return q, r, apothem


def build_validation_plan(prob: Raster, apothem_km: float = 70.0,
                          per_bin: int = 5, seed: int = 0) -> HexValidationPlan:
    """Spatially stratified, probability-binned validation sample.

    Per hexagon, each drawing bin receives round(per_bin * mapped
    fraction of the hexagon) pixels drawn uniformly without replacement;
    the (0,0.01] and (0.99,1] sub-bins are drawn separately and merged
    into their neighbors for reporting. Pools short of the target yield
    everything they have, with a logged shortfall.
    """
    valid = prob.valid_mask()
    plan = HexValidationPlan(apothem_km=apothem_km, per_bin=per_bin,
                             seed=seed, hexagons=[])
    if not valid.any():
        return plan
    q, r, apothem = assign_hexagons(prob, apothem_km)
    cell_area = prob.transform.resolution ** 2
    cells_per_hex = hex_area(apothem_km) * 1e6 / cell_area

    keys = np.stack([q.ravel(), r.ravel()], axis=1)
    probs_flat = prob.cells.ravel().astype(np.float64)
    valid_flat = valid.ravel()

    hex_ids = {}
    for qq, rr in sorted({(int(a), int(b)) for a, b in keys[valid_flat]}):
        hex_ids[(qq, rr)] = f"hex_{len(hex_ids):03d}"
        plan.hexagons.append(Hexagon(
            hex_id=hex_ids[(qq, rr)],
            center_x=prob.transform.origin_x + 1.5 * (2 * apothem / math.sqrt(3)) * qq,
            center_y=(prob.transform.origin_y - prob.transform.height
                      * prob.transform.resolution) + 2 * apothem * rr
                      + apothem * qq,
        ))

    rng = np.random.default_rng(seed)
    edges = np.asarray(DRAW_BIN_EDGES)
    width = prob.transform.width
    for (qq, rr), hid in hex_ids.items():
        in_hex = valid_flat & (keys[:, 0] == qq) & (keys[:, 1] == rr)
        mapped_fraction = min(1.0, float(np.count_nonzero(in_hex)) / cells_per_hex)
        target = int(math.floor(per_bin * mapped_fraction + 0.5))
        hex_idx = np.flatnonzero(in_hex)
        hex_probs = probs_flat[hex_idx]
        bin_of = np.searchsorted(edges, hex_probs, side="left") - 1
        for b in range(len(edges) - 1):
            lo, hi = edges[b], edges[b + 1]
            pool = hex_idx[bin_of == b]
            take = min(target, pool.size)
            picked = np.sort(rng.choice(pool, size=take, replace=False)) if take else np.array([], dtype=np.int64)
            pixels = [(int(i % width), int(i // width), float(probs_flat[i]))
                      for i in picked]
            sample = BinSample(
                hex_id=hid,
                draw_bin=_bin_label(lo, hi),
                report_bin=_report_bin(lo, hi),
                target=target,
                pixels=pixels,
            )
            if sample.shortfall:
                logger.info("plan shortfall: %s bin %s has %d of %d",
                            hid, sample.draw_bin, len(pixels), target)
            plan.samples.append(sample)
    return plan


def auc_on_patchwork_sample(labels: Raster, probs: Raster,
                            n: int = 1_000_000, seed: int = 0) -> float:
    """ROC AUC over a seeded uniform sample of valid pixels (clamped to
    the population; exact full-population AUC when n covers it)."""
    same_grid(labels, probs)
    valid = np.flatnonzero(probs.valid_mask().ravel())
    if valid.size == 0:
        raise DataError("no valid pixels to sample")
    y = labels.cells.ravel()
    p = probs.cells.ravel().astype(np.float64)
    rng = np.random.default_rng(seed)
    size = min(n, valid.size)
    pick = rng.choice(valid, size=size, replace=False)
    if y[pick].min() == y[pick].max():
        size = min(2 * n, valid.size)
        pick = rng.choice(valid, size=size, replace=False)
        if y[pick].min() == y[pick].max():
            raise NumericError("patchwork AUC sample contains a single class")
    return roc_auc(y[pick], p[pick])
