"""Histogram-based gradient boosting machine with leaf-wise tree growth.

Binary log-loss objective with second-order (gradient/hessian) split
gains. Features are pre-binned once on the training data, every bin
holding at least `min_per_bin` observations. Trees grow leaf-wise: the
leaf whose best split has the highest gain splits next, until the leaf
cap is reached or no split has positive gain; depth is unconstrained.

Determinism contract: per-tree generators from
SeedSequence(seed).spawn(n_trees); per tree, one rng.choice draw for the
bag (without replacement) then one for the feature subset; equal-gain
heap ties resolve to the earlier-created leaf.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

import numpy as np

from ..errors import DataError
from .common import (
    TreeArrays,
    TreeBuilder,
    check_features,
    concat_trees,
    log_loss,
    sigmoid,
    spawn_generators,
)

logger = logging.getLogger(__name__)

PREVALENCE_CLIP = 1e-6


@dataclass(frozen=True)
class GbmParams:
    n_trees: int = 2500
    max_leaves: int = 14
    learning_rate: float = 0.01
    min_leaf: int = 10
    min_per_bin: int = 3
    l1: float = 0.0
    l2: float = 0.5
    bagging_fraction: float = 0.5
    feature_fraction: float = 0.9
    max_bins: int = 255


@dataclass
class GbmModel:
    params: GbmParams
    seed: int
    feature_names: tuple
    base_score: float
    trees: TreeArrays

    def decision_function(self, x) -> np.ndarray:
        x = check_features(x, len(self.feature_names))
        raw = np.full(x.shape[0], self.base_score)
        if self.trees.n_trees:
            raw += self.trees.predict_sum(x)
        return raw

    def predict_proba(self, x) -> np.ndarray:
        return sigmoid(self.decision_function(x))


def bin_edges(values: np.ndarray, min_per_bin: int, max_bins: int) -> np.ndarray:
    """Ascending cut values; bin j collects x <= edges[j] (last bin is
    everything above the last edge). Every bin holds >= min_per_bin
    training observations."""
    vals, counts = np.unique(values, return_counts=True)
    edges = []
    acc = 0
    for v, c in zip(vals[:-1], counts[:-1]):
        acc += int(c)
        if acc >= min_per_bin:
            edges.append(float(v))
            acc = 0
    # Remainder above the last edge must also fill a bin.
    tail = int(counts[-1]) + acc
    while edges and tail < min_per_bin:
        # merging upward: drop the last edge and absorb its bin
        last = edges.pop()
        mask = (vals > (edges[-1] if edges else -np.inf)) & (vals <= last)
        tail += int(counts[mask].sum())
    if len(edges) > max_bins - 1:
        pick = np.unique(np.linspace(0, len(edges) - 1, max_bins - 1).round().astype(int))
        edges = [edges[i] for i in pick]
    return np.asarray(edges, dtype=np.float64)


def _score(g: float, h: float, l1: float, l2: float) -> float:
    t = np.sign(g) * max(0.0, abs(g) - l1)
    return t * t / (h + l2)


def _leaf_value(g: float, h: float, params: GbmParams) -> float:
    t = np.sign(g) * max(0.0, abs(g) - params.l1)
    return -params.learning_rate * t / (h + params.l2)


class _Leaf:
    __slots__ = ("node_id", "rows", "g", "h", "best")

    def __init__(self, node_id, rows, g, h):
        self.node_id = node_id
        self.rows = rows
        self.g = g
        self.h = h
        self.best = None  # (gain, feature, bin_j)


def _scores(g: np.ndarray, h: np.ndarray, l1: float, l2: float) -> np.ndarray:
    t = np.sign(g) * np.maximum(0.0, np.abs(g) - l1)
    return t * t / (h + l2)


def _best_leaf_split(leaf: _Leaf, bins: np.ndarray, grad, hess, feats,
                     n_bins, params: GbmParams):
    """Highest-gain (gain, feature, bin) for one leaf, or None.

    Ties resolve to the earlier feature in `feats` order, then the lower
    bin index.
    """
    rows = leaf.rows
    if rows.size < 2 * params.min_leaf:
        return None
    parent = _score(leaf.g, leaf.h, params.l1, params.l2)
    best = None
    gb = grad[rows]
    hb = hess[rows]
    for f in feats:
        nb = n_bins[f]
        if nb < 2:
            continue
        b = bins[rows, f]
        cnt = np.bincount(b, minlength=nb)
        gsum = np.bincount(b, weights=gb, minlength=nb)
        hsum = np.bincount(b, weights=hb, minlength=nb)
        c_cnt = np.cumsum(cnt)[:-1]
        c_g = np.cumsum(gsum)[:-1]
        c_h = np.cumsum(hsum)[:-1]
        ok = (c_cnt >= params.min_leaf) & (rows.size - c_cnt >= params.min_leaf)
        if not ok.any():
            continue
        gains = 0.5 * (
            _scores(c_g, c_h, params.l1, params.l2)
            + _scores(leaf.g - c_g, leaf.h - c_h, params.l1, params.l2)
            - parent
        )
        gains[~ok] = -np.inf
        j = int(np.argmax(gains))
        if gains[j] > 0 and (best is None or gains[j] > best[0]):
            best = (float(gains[j]), int(f), j)
    return best


def _grow_tree(bins, grad, hess, rows, feats, edges, n_bins,
               params: GbmParams) -> TreeBuilder:
    builder = TreeBuilder()
    root = _Leaf(builder.add_leaf(0.0), rows, float(grad[rows].sum()),
                 float(hess[rows].sum()))
    root.best = _best_leaf_split(root, bins, grad, hess, feats, n_bins, params)
    heap = []
    counter = 0
    if root.best is not None:
        heapq.heappush(heap, (-root.best[0], counter, root))
    leaves = {root.node_id: root}
    while heap and len(leaves) < params.max_leaves:
        _, _, leaf = heapq.heappop(heap)
        if leaf.node_id not in leaves or leaf.best is None:
            continue
        gain, f, j = leaf.best
        thr = edges[f][j]
        go_left = bins[leaf.rows, f] <= j
        left_rows = leaf.rows[go_left]
        right_rows = leaf.rows[~go_left]
        builder.promote_to_split(leaf.node_id, int(f), float(thr))
        del leaves[leaf.node_id]
        children = []
        for child_rows in (left_rows, right_rows):
            child = _Leaf(
                builder.add_leaf(0.0), child_rows,
                float(grad[child_rows].sum()), float(hess[child_rows].sum()),
            )
            leaves[child.node_id] = child
            children.append(child)
        builder.set_children(leaf.node_id, children[0].node_id, children[1].node_id)
        if len(leaves) < params.max_leaves:
            for child in children:
                child.best = _best_leaf_split(child, bins, grad, hess, feats,
                                              n_bins, params)
                if child.best is not None:
                    counter += 1
                    heapq.heappush(heap, (-child.best[0], counter, child))
    for leaf in leaves.values():
        builder.value[leaf.node_id] = _leaf_value(leaf.g, leaf.h, params)
    return builder


def train_gbm(train, params: GbmParams = GbmParams(), seed: int = 0) -> GbmModel:
    """Fit the boosting machine on the training split."""
    x = np.ascontiguousarray(train.features, dtype=np.float32)
    y = train.labels.astype(np.float64)
    n, n_feat = x.shape
    if n < params.min_leaf:
        raise DataError(f"need at least {params.min_leaf} records, got {n}")

    prevalence = float(np.clip(y.mean(), PREVALENCE_CLIP, 1 - PREVALENCE_CLIP))
    base = float(np.log(prevalence / (1 - prevalence)))
    feature_names = tuple(train.feature_names)

    if y.min() == y.max():
        logger.warning("single-class training labels: constant GBM output")
        return GbmModel(params=params, seed=seed, feature_names=feature_names,
                        base_score=base, trees=concat_trees([]))

    edges = [bin_edges(x[:, f], params.min_per_bin, params.max_bins)
             for f in range(n_feat)]
    n_bins = np.array([e.size + 1 for e in edges], dtype=np.int64)
    bins = np.empty((n, n_feat), dtype=np.int32)
    for f in range(n_feat):
        bins[:, f] = np.searchsorted(edges[f], x[:, f], side="left")

    gens = spawn_generators(seed, params.n_trees)
    raw = np.full(n, base)
    builders = []
    bag_size = max(1, int(round(params.bagging_fraction * n)))
    feat_size = max(1, int(round(params.feature_fraction * n_feat)))
    for rng in gens:
        bag = np.sort(rng.choice(n, size=bag_size, replace=False))
        feats = np.sort(rng.choice(n_feat, size=feat_size, replace=False))
        p = sigmoid(raw)
        grad = p - y
        hess = p * (1 - p)
        builder = _grow_tree(bins, grad, hess, bag, feats, edges, n_bins, params)
        if len(builder.feature) == 1:  # no split found: stop boosting
            break
        builders.append(builder)
        tree = concat_trees([builder])
        raw += tree.predict_sum(x)
    model = GbmModel(params=params, seed=seed, feature_names=feature_names,
                     base_score=base, trees=concat_trees(builders))
    return model


def training_log_loss(model: GbmModel, train) -> float:
    return log_loss(train.labels.astype(np.float64),
                    model.predict_proba(train.features))
