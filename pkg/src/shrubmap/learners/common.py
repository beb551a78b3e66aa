"""Shared learner plumbing: encodings, scaling, sigmoid, tree layout.

Tree-based models consume features ordinally, including the categorical
land-cover code; the neural net and the logistic stacker see categorical
columns one-hot encoded and numeric columns standardized to training
statistics.

All trees share one array layout so prediction funnels through a single
kernel: concatenated node arrays where feature == -1 marks a leaf, and
traversal descends left iff x[feature] <= threshold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import UsageError


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y, p, eps: float = 1e-12) -> float:
    y = np.asarray(y, dtype=np.float64)
    p = np.clip(np.asarray(p, dtype=np.float64), eps, 1 - eps)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log1p(-p)))


@dataclass
class OneHotEncoder:
    """Expands categorical columns into indicator blocks.

    Output layout: numeric columns in original order, then one indicator
    block per categorical column (categories ascending). Unseen codes
    map to an all-zero block.
    """

    categorical_columns: tuple
    categories: list

    @classmethod
    def fit(cls, x: np.ndarray, categorical_columns) -> "OneHotEncoder":
        cats = [np.unique(x[:, c]) for c in categorical_columns]
        return cls(categorical_columns=tuple(categorical_columns), categories=cats)

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        numeric = [j for j in range(x.shape[1]) if j not in self.categorical_columns]
        blocks = [x[:, numeric]]
        for col, cats in zip(self.categorical_columns, self.categories):
            blocks.append((x[:, col, None] == cats[None, :]).astype(np.float64))
        return np.concatenate(blocks, axis=1)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        mean = x.mean(axis=0)
        std = x.std(axis=0)
        std = np.where(std == 0, 1.0, std)
        return cls(mean=mean, std=std)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std


@dataclass
class TreeArrays:
    """Concatenated per-node arrays for a set of trees."""

    feature: np.ndarray    # int32, -1 for leaves
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32
    right: np.ndarray      # int32
    value: np.ndarray      # float64 leaf payload
    roots: np.ndarray      # int64, one per tree

    @property
    def n_trees(self):
        return self.roots.size

    def predict_sum(self, x: np.ndarray) -> np.ndarray:
        """Per-record sum of leaf values over all trees."""
        x = np.ascontiguousarray(x, dtype=np.float32)
        if x.ndim != 2:
            raise UsageError("feature matrix must be 2-D")
        return _kernels.apply_trees(
            x, self.feature, self.threshold, self.left, self.right,
            self.value, self.roots,
        )


class TreeBuilder:
    """Accumulates one tree's nodes in creation order."""

    def __init__(self):
        self.feature = []
        self.threshold = []
        self.left = []
        self.right = []
        self.value = []

    def add_leaf(self, value: float) -> int:
        idx = len(self.feature)
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return idx

    def add_split(self, feature: int, threshold: float) -> int:
        idx = len(self.feature)
        self.feature.append(feature)
        self.threshold.append(threshold)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return idx

    def set_children(self, node: int, left: int, right: int) -> None:
        self.left[node] = left
        self.right[node] = right

    def promote_to_split(self, node: int, feature: int, threshold: float) -> None:
        self.feature[node] = feature
        self.threshold[node] = threshold
        self.value[node] = 0.0


def concat_trees(builders) -> TreeArrays:
    feature, threshold, left, right, value, roots = [], [], [], [], [], []
    offset = 0
    for b in builders:
        n = len(b.feature)
        roots.append(offset)
        feature.extend(b.feature)
        threshold.extend(b.threshold)
        left.extend(x + offset if x >= 0 else -1 for x in b.left)
        right.extend(x + offset if x >= 0 else -1 for x in b.right)
        value.extend(b.value)
        offset += n
    return TreeArrays(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        value=np.asarray(value, dtype=np.float64),
        roots=np.asarray(roots, dtype=np.int64),
    )


def spawn_generators(seed: int, n: int):
    """n independent generators derived from one master seed; results are
    identical however the per-item work is scheduled."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def check_features(x, n_features: int) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != n_features:
        raise UsageError(
            f"feature matrix must be (n, {n_features}), got {x.shape}"
        )
    return x
