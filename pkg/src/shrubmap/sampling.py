"""Balanced pixel sampling and train/validation/test splitting.

Samples are drawn half shrub / half other, uniformly without replacement
within class, then split at random (not class-stratified; the balanced
pool keeps splits approximately balanced). Split sizes use
largest-remainder rounding, ties resolved in (train, validation, test)
order. Everything is deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SamplingError, UsageError
from .predictors import DEFAULT_MODEL_FEATURES, PredictorStack
from .raster import Raster, same_grid

SPLIT_NAMES = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class PixelRecord:
    """One labeled pixel: id (tile, col, row), features, label, epoch."""

    tile: str
    col: int
    row: int
    epoch: int
    label: bool
    features: tuple


@dataclass
class SampleSet:
    """Columnar record store; `splits` may be empty before splitting."""

    feature_names: tuple
    tiles: np.ndarray
    cols: np.ndarray
    rows: np.ndarray
    epochs: np.ndarray
    labels: np.ndarray
    features: np.ndarray
    splits: np.ndarray = field(default=None)
    seed: int = 0

    def __len__(self):
        return self.labels.size

    def record(self, i: int) -> PixelRecord:
        return PixelRecord(
            tile=str(self.tiles[i]),
            col=int(self.cols[i]),
            row=int(self.rows[i]),
            epoch=int(self.epochs[i]),
            label=bool(self.labels[i]),
            features=tuple(float(v) for v in self.features[i]),
        )

    def subset(self, mask) -> "SampleSet":
        idx = np.flatnonzero(mask) if mask.dtype == bool else np.asarray(mask)
        return SampleSet(
            feature_names=self.feature_names,
            tiles=self.tiles[idx],
            cols=self.cols[idx],
            rows=self.rows[idx],
            epochs=self.epochs[idx],
            labels=self.labels[idx],
            features=self.features[idx],
            splits=None if self.splits is None else self.splits[idx],
            seed=self.seed,
        )

    def split(self, name: str) -> "SampleSet":
        if self.splits is None:
            raise UsageError("sample set has no split assignment yet")
        if name not in SPLIT_NAMES:
            raise UsageError(f"unknown split {name!r}")
        return self.subset(self.splits == name)


def stratified_balanced_sample(labels: Raster, stack: PredictorStack,
                               n_total: int, seed: int,
                               feature_names=DEFAULT_MODEL_FEATURES,
                               tile: str = "t0") -> SampleSet:
    """Draw n_total/2 shrub and n_total/2 other pixels uniformly without
    replacement from the valid (unmasked, fully defined) pixels."""
    if n_total <= 0 or n_total % 2:
        raise UsageError(f"n_total must be even and positive, got {n_total}")
    same_grid(labels, stack.bands["NBR"])
    valid = stack.valid_mask()
    half = n_total // 2
    rng = np.random.default_rng(seed)
    picks = []
    for want_label, class_name in ((True, "shrubland"), (False, "other")):
        pool = np.flatnonzero(valid & (labels.cells == want_label))
        if pool.size < half:
            raise SamplingError(
                f"class {class_name!r} has {pool.size} valid pixels, need {half}"
            )
        picks.append(np.sort(rng.choice(pool, size=half, replace=False)))
    flat = np.concatenate(picks)
    rows, cols = np.divmod(flat, labels.transform.width)
    return SampleSet(
        feature_names=tuple(feature_names),
        tiles=np.full(n_total, tile, dtype=object),
        cols=cols.astype(np.int64),
        rows=rows.astype(np.int64),
        epochs=np.full(n_total, stack.epoch, dtype=np.int64),
        labels=np.r_[np.ones(half, dtype=bool), np.zeros(half, dtype=bool)],
        features=stack.feature_matrix(feature_names, pixels=(rows, cols)),
        seed=seed,
    )


def largest_remainder_sizes(n: int, fractions) -> list:
    """Integer sizes summing to n, proportional to fractions; remainders
    assigned largest-first, ties to earlier entries."""
    exact = [f * n for f in fractions]
    sizes = [int(np.floor(e)) for e in exact]
    short = n - sum(sizes)
    order = sorted(range(len(fractions)),
                   key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:short]:
        sizes[i] += 1
    return sizes


def split_records(records: SampleSet, fractions=DEFAULT_FRACTIONS,
                  seed: int = 0) -> SampleSet:
    """Randomly partition records into train/validation/test."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise UsageError(f"need 3 positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(records)
    sizes = largest_remainder_sizes(n, fractions)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    splits = np.empty(n, dtype=object)
    start = 0
    for name, size in zip(SPLIT_NAMES, sizes):
        splits[perm[start:start + size]] = name
        start += size
    out = records.subset(np.arange(n))
    out.splits = splits
    out.seed = seed
    return out


def write_sample_tsv(sample: SampleSet, path) -> None:
    """Write records as delimited text with a header row."""
    header = ["tile", "col", "row", "epoch", "label", "split"]
    header += list(sample.feature_names)
    lines = ["\t".join(header)]
    splits = sample.splits if sample.splits is not None else ["?"] * len(sample)
    for i in range(len(sample)):
        cells = [
            str(sample.tiles[i]),
            str(int(sample.cols[i])),
            str(int(sample.rows[i])),
            str(int(sample.epochs[i])),
            "1" if sample.labels[i] else "0",
            str(splits[i]),
        ]
        cells += [repr(float(v)) for v in sample.features[i]]
        lines.append("\t".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sample_tsv(path) -> SampleSet:
    with open(path) as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[:6] != ["tile", "col", "row", "epoch", "label", "split"]:
            raise DataError(f"{path}: unexpected sample header {header[:6]}")
        feature_names = tuple(header[6:])
        tiles, cols, rows, epochs, labels, splits, feats = [], [], [], [], [], [], []
        for lineno, line in enumerate(fh, 2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} columns")
            tiles.append(parts[0])
            cols.append(int(parts[1]))
            rows.append(int(parts[2]))
            epochs.append(int(parts[3]))
            labels.append(parts[4] == "1")
            splits.append(parts[5])
            feats.append([float(v) for v in parts[6:]])
    return SampleSet(
        feature_names=feature_names,
        tiles=np.array(tiles, dtype=object),
        cols=np.array(cols, dtype=np.int64),
        rows=np.array(rows, dtype=np.int64),
        epochs=np.array(epochs, dtype=np.int64),
        labels=np.array(labels, dtype=bool),
        features=np.array(feats, dtype=np.float32),
        splits=np.array(splits, dtype=object),
    )
