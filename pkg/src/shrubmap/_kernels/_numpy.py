"""Pure-numpy implementations of the hot kernels.

Results are bit-identical to the native Cython versions: max-reduction is
order independent, and tree traversal makes the same comparisons and
accumulates per-record tree sums in the same order.
"""

import numpy as np

BACKEND = "numpy"


def max_bin(keys: np.ndarray, values: np.ndarray, out: np.ndarray) -> None:
    """out[k] = max(out[k], values[i] for keys[i] == k). In place.

    keys: int64 flat cell indices into `out` (1-D float32, pre-filled).
    """
    if keys.size == 0:
        return
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    sv = values[order]
    starts = np.flatnonzero(np.r_[True, sk[1:] != sk[:-1]])
    maxima = np.maximum.reduceat(sv, starts)
    cells = sk[starts]
    out[cells] = np.maximum(out[cells], maxima)


def apply_trees(
    x: np.ndarray,
    feature: np.ndarray,
    threshold: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    value: np.ndarray,
    roots: np.ndarray,
) -> np.ndarray:
    """Sum of leaf values over all trees for each record.

    x: (n, f) float32. Node arrays are the concatenated trees; `roots`
    holds each tree's root node index. feature == -1 marks a leaf.
    Traversal rule: descend left iff x[feat] <= threshold.
    """
    n = x.shape[0]
    total = np.zeros(n, dtype=np.float64)
    rows = np.arange(n)
    for root in roots:
        node = np.full(n, root, dtype=np.int64)
        active = feature[node] >= 0
        while active.any():
            idx = node[active]
            feat = feature[idx]
            go_left = x[rows[active], feat] <= threshold[idx]
            node[active] = np.where(go_left, left[idx], right[idx])
            active = feature[node] >= 0
        total += value[node]
    return total
