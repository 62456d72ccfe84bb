# cython: language_level=3
"""Compiled boosted-tree kernels; see ``_gbdt_fallback`` for the contract."""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def scan_level(const double[:, ::1] x, list orders, const cnp.intp_t[::1] features,
               const cnp.intp_t[::1] node_of, const double[::1] g, const double[::1] h,
               const double[::1] node_g, const double[::1] node_h,
               double lam, double min_child_weight,
               double[::1] best_gain, cnp.intp_t[::1] best_feature,
               double[::1] best_threshold):
    cdef Py_ssize_t n_nodes = node_g.shape[0]
    cdef Py_ssize_t n_feat = features.shape[0]
    cdef double[::1] parent = np.empty(n_nodes)
    cdef double[::1] gl = np.empty(n_nodes)
    cdef double[::1] hl = np.empty(n_nodes)
    cdef double[::1] last = np.empty(n_nodes)
    cdef char[::1] seen = np.empty(n_nodes, dtype=np.int8)
    cdef const cnp.intp_t[::1] order
    cdef Py_ssize_t i, k, j, r, n_rows
    cdef cnp.intp_t f
    cdef double v, gr, hr, gain

    for j in range(n_nodes):
        parent[j] = node_g[j] * node_g[j] / (node_h[j] + lam)

    for i in range(n_feat):
        f = features[i]
        order = orders[i]
        n_rows = order.shape[0]
        for j in range(n_nodes):
            gl[j] = 0.0
            hl[j] = 0.0
            seen[j] = 0
        with nogil:
            for k in range(n_rows):
                r = order[k]
                j = node_of[r]
                if j < 0:
                    continue
                v = x[r, f]
                if seen[j] and v > last[j]:
                    gr = node_g[j] - gl[j]
                    hr = node_h[j] - hl[j]
                    if hl[j] >= min_child_weight and hr >= min_child_weight:
                        gain = 0.5 * (gl[j] * gl[j] / (hl[j] + lam) + gr * gr / (hr + lam) - parent[j])
                        if gain > best_gain[j]:
                            best_gain[j] = gain
                            best_feature[j] = f
                            best_threshold[j] = (last[j] + v) / 2.0
                gl[j] += g[r]
                hl[j] += h[r]
                last[j] = v
                seen[j] = 1


def predict_tree(const double[:, ::1] x, const cnp.intp_t[::1] feature,
                 const double[::1] threshold, const cnp.intp_t[::1] left,
                 const cnp.intp_t[::1] right, const double[::1] value, double[::1] out):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t r
    cdef cnp.intp_t node
    with nogil:
        for r in range(n):
            node = 0
            while left[node] >= 0:
                if x[r, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = value[node]
