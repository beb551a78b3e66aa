"""Random forest of Gini-impurity classification trees.

The exact growing procedure is part of the model contract (a reference
implementation must reproduce it bit-for-bit from this description):

* Per-tree generators come from SeedSequence(seed).spawn(n_trees).
* Each tree draws a bootstrap of size max(1, round(bootstrap_fraction*n))
  via rng.integers(0, n, size=m) (with replacement).
* Nodes are visited depth-first preorder, left child fully before right.
* A node becomes a leaf (probability = positive fraction) when it has
  fewer than 2*min_node records, is label-pure, or no valid split exists.
* Otherwise it draws rng.choice(n_features, size=features_per_split,
  replace=False) and scans the drawn features in order; per feature,
  candidate thresholds are the distinct sorted values except the last,
  rule x <= threshold -> left. The scan keeps the first strict minimum of
    cost = nL - (posL^2 + negL^2)/nL + nR - (posR^2 + negR^2)/nR
  (proportional to the weighted Gini impurity of the children).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .common import TreeArrays, TreeBuilder, check_features, concat_trees, spawn_generators


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 3000
    bootstrap_fraction: float = 0.2
    min_node: int = 6
    features_per_split: int = 1


@dataclass
class ForestModel:
    params: ForestParams
    seed: int
    feature_names: tuple
    trees: TreeArrays

    def predict_proba(self, x) -> np.ndarray:
        """Mean leaf probability over all trees, in [0, 1]."""
        x = check_features(x, len(self.feature_names))
        return self.trees.predict_sum(x) / self.trees.n_trees


def _best_split(x_col: np.ndarray, y: np.ndarray):
    """(cost, threshold) of the best split of one feature, or None."""
    order = np.argsort(x_col, kind="stable")
    xs = x_col[order]
    ys = y[order]
    boundary = np.flatnonzero(xs[:-1] < xs[1:])
    if boundary.size == 0:
        return None
    n = xs.size
    pos_left = np.cumsum(ys)[boundary].astype(np.float64)
    n_left = (boundary + 1).astype(np.float64)
    n_pos = float(ys.sum())
    neg_left = n_left - pos_left
    pos_right = n_pos - pos_left
    n_right = n - n_left
    neg_right = n_right - pos_right
    cost = (
        n_left - (pos_left**2 + neg_left**2) / n_left
        + n_right - (pos_right**2 + neg_right**2) / n_right
    )
    k = int(np.argmin(cost))
    return float(cost[k]), float(xs[boundary[k]])


def _grow_tree(x: np.ndarray, y: np.ndarray, params: ForestParams, rng) -> TreeBuilder:
    """Grow one tree on its bootstrap; explicit stack keeps the preorder
    visit (and hence the rng draw sequence) of the recursive definition
    without Python recursion limits."""
    n = y.size
    m = max(1, int(round(params.bootstrap_fraction * n)))
    boot = rng.integers(0, n, size=m)
    builder = TreeBuilder()
    stack = [(np.asarray(boot), -1, "left")]
    while stack:
        records, parent, side = stack.pop()
        labels = y[records]
        n_pos = int(labels.sum())
        pure = n_pos == 0 or n_pos == records.size
        best = None
        if records.size >= 2 * params.min_node and not pure:
            feats = rng.choice(x.shape[1], size=params.features_per_split, replace=False)
            for f in feats:
                found = _best_split(x[records, f], labels)
                if found is not None and (best is None or found[0] < best[0]):
                    best = (found[0], int(f), found[1])
        if best is None:
            idx = builder.add_leaf(n_pos / records.size)
        else:
            _, feat, thr = best
            idx = builder.add_split(feat, thr)
            go_left = x[records, feat] <= thr
            stack.append((records[~go_left], idx, "right"))
            stack.append((records[go_left], idx, "left"))
        if parent >= 0:
            if side == "left":
                builder.left[parent] = idx
            else:
                builder.right[parent] = idx
    return builder


def train_forest(train, params: ForestParams = ForestParams(), seed: int = 0,
                 workers: int = 1) -> ForestModel:
    """Fit a forest on the training split. Deterministic given seed,
    independent of `workers` (per-tree generators are pre-spawned)."""
    x = np.ascontiguousarray(train.features, dtype=np.float32)
    y = train.labels.astype(np.int64)
    if y.size == 0:
        raise DataError("empty training set")
    gens = spawn_generators(seed, params.n_trees)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            builders = list(pool.map(
                lambda rng: _grow_tree(x, y, params, rng), gens))
    else:
        builders = [_grow_tree(x, y, params, rng) for rng in gens]
    return ForestModel(
        params=params,
        seed=seed,
        feature_names=tuple(train.feature_names),
        trees=concat_trees(builders),
    )
