# cython: boundscheck=False, wraparound=False, cdivision=True
"""Cython implementations of the hot kernels.

Same contracts as _numpy.py; see that module for the documented
semantics. Single-threaded on purpose: results must not depend on any
scheduling, and these loops are already memory-bound.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "native"


def max_bin(cnp.int64_t[::1] keys, cnp.float32_t[::1] values, cnp.float32_t[::1] out):
    cdef Py_ssize_t i, n = keys.shape[0]
    cdef cnp.int64_t k
    cdef cnp.float32_t v
    for i in range(n):
        k = keys[i]
        v = values[i]
        if v > out[k]:
            out[k] = v


def apply_trees(
    cnp.float32_t[:, ::1] x,
    cnp.int32_t[::1] feature,
    cnp.float64_t[::1] threshold,
    cnp.int32_t[::1] left,
    cnp.int32_t[::1] right,
    cnp.float64_t[::1] value,
    cnp.int64_t[::1] roots,
):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t t, i, n_trees = roots.shape[0]
    cdef cnp.int64_t node
    cdef cnp.int32_t feat
    out_arr = np.zeros(n, dtype=np.float64)
    cdef cnp.float64_t[::1] out = out_arr
    for t in range(n_trees):
        for i in range(n):
            node = roots[t]
            feat = feature[node]
            while feat >= 0:
                if x[i, feat] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
                feat = feature[node]
            out[i] += value[node]
    return out_arr
