"""Pure numpy versions of the boosted-tree hot loops.

Must stay bit-compatible with ``_gbdt_core.pyx``: gradient prefix sums are
sequential (``np.cumsum``) and the gain expression is evaluated in the same
order, so both backends pick identical splits.
"""
import numpy as np


def scan_level(x, orders, features, node_of, g, h, node_g, node_h,
               lam, min_child_weight, best_gain, best_feature, best_threshold):
    """Best exact split for every active node of one tree level.

    ``orders[i]`` lists the sampled rows sorted (stably) by ``x[:, features[i]]``.
    ``node_of[r]`` is the level-local node slot of row ``r`` or -1.
    Results are written into ``best_*`` (length = number of slots); a slot
    keeps its incoming ``best_gain`` unless a strictly larger gain is found,
    so features are scanned in ascending order and thresholds ascending.
    """
    n_nodes = len(node_g)
    parent = [node_g[j] * node_g[j] / (node_h[j] + lam) for j in range(n_nodes)]
    for i in range(len(features)):
        f = features[i]
        order = orders[i]
        slots = node_of[order]
        for j in range(n_nodes):
            rows = order[slots == j]
            if len(rows) < 2:
                continue
            v = x[rows, f]
            gl = np.cumsum(g[rows])[:-1]
            hl = np.cumsum(h[rows])[:-1]
            cand = v[1:] > v[:-1]
            gr = node_g[j] - gl
            hr = node_h[j] - hl
            ok = cand & (hl >= min_child_weight) & (hr >= min_child_weight)
            if not ok.any():
                continue
            with np.errstate(divide="ignore", invalid="ignore"):
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent[j])
            gain = np.where(ok, gain, -np.inf)
            k = int(np.argmax(gain))
            if gain[k] > best_gain[j]:
                best_gain[j] = gain[k]
                best_feature[j] = f
                best_threshold[j] = (v[k] + v[k + 1]) / 2.0


def predict_tree(x, feature, threshold, left, right, value, out):
    """Route every row of ``x`` to a leaf; write leaf values into ``out``."""
    node = np.zeros(len(x), dtype=np.intp)
    while True:
        internal = left[node] >= 0
        if not internal.any():
            break
        idx = np.flatnonzero(internal)
        cur = node[idx]
        go_left = x[idx, feature[cur]] < threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
    out[:] = value[node]
