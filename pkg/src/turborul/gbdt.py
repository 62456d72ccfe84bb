"""Gradient-boosted regression trees for squared error.

Trees are grown level by level with exact greedy splits (every midpoint
between adjacent distinct values is a candidate) scored by the
second-order gain::

    1/2 * [GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)]

With squared error the gradient is ``pred - y`` and the hessian is 1, so a
leaf weight ``-G/(H+lambda)`` is a shrunk mean residual. Rows go left when
``x[feature] < threshold``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import StructuralError
from .rng import stream


@dataclass(frozen=True)
class GbdtConfig:
    n_estimators: int = 500
    max_depth: int = 6
    learning_rate: float = 0.05
    subsample: float = 0.8
    colsample_bytree: float = 0.8
    early_stopping_patience: int = 20
    lambda_l2: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 42

    def __post_init__(self):
        for name in ("learning_rate", "subsample", "colsample_bytree"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.n_estimators < 1 or self.early_stopping_patience < 1:
            raise ValueError("n_estimators and early_stopping_patience must be >= 1")
        if self.lambda_l2 < 0 or self.min_child_weight < 0:
            raise ValueError("lambda_l2 and min_child_weight must be nonnegative")


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


class Tree:
    """Flat node arrays; node 0 is the root, ``left == -1`` marks a leaf."""

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.intp)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.intp)
        self.right = np.asarray(right, dtype=np.intp)
        self.value = np.asarray(value, dtype=np.float64)

    def __len__(self):
        return len(self.value)

    def is_leaf(self, node):
        return self.left[node] < 0

    def depth(self):
        depth = np.zeros(len(self), dtype=int)
        for node in range(len(self)):
            if not self.is_leaf(node):
                depth[self.left[node]] = depth[self.right[node]] = depth[node] + 1
        return int(depth.max())

    def leaf_values(self):
        return self.value[self.left < 0]

    def predict(self, x, backend=None):
        backend = backend or kernels.backend
        x = np.ascontiguousarray(x, dtype=np.float64)
        out = np.empty(len(x))
        backend.predict_tree(x, self.feature, self.threshold, self.left, self.right,
                             self.value, out)
        return out

    def to_records(self):
        records = []
        for node in range(len(self)):
            if self.is_leaf(node):
                records.append({"id": node, "leaf": float(self.value[node])})
            else:
                records.append({
                    "id": node,
                    "feature": int(self.feature[node]),
                    "threshold": float(self.threshold[node]),
                    "left": int(self.left[node]),
                    "right": int(self.right[node]),
                })
        return records

    @classmethod
    def from_records(cls, records):
        n = len(records)
        feature = np.full(n, -1, dtype=np.intp)
        threshold = np.zeros(n)
        left = np.full(n, -1, dtype=np.intp)
        right = np.full(n, -1, dtype=np.intp)
        value = np.zeros(n)
        for rec in records:
            i = rec["id"]
            if "leaf" in rec:
                value[i] = rec["leaf"]
            else:
                feature[i] = rec["feature"]
                threshold[i] = rec["threshold"]
                left[i] = rec["left"]
                right[i] = rec["right"]
        return cls(feature, threshold, left, right, value)


@dataclass(eq=False)
class GbdtModel:
    base_score: float
    trees: list
    best_round: int  # index of the last tree used for prediction; -1 = none
    learning_rate: float
    n_features: int
    val_history: list = field(default_factory=list)
    train_history: list = field(default_factory=list)

    def to_dict(self):
        return {
            "base_score": self.base_score,
            "best_round": self.best_round,
            "learning_rate": self.learning_rate,
            "n_features": self.n_features,
            "val_history": list(self.val_history),
            "train_history": list(self.train_history),
            "trees": [t.to_records() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            base_score=d["base_score"],
            trees=[Tree.from_records(r) for r in d["trees"]],
            best_round=d["best_round"],
            learning_rate=d["learning_rate"],
            n_features=d["n_features"],
            val_history=list(d.get("val_history", [])),
            train_history=list(d.get("train_history", [])),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


# -- split search -------------------------------------------------------------


def _node_sums(values, rows):
    # sequential sum in ascending row order; shared by both backends
    return float(np.cumsum(values[rows])[-1]) if len(rows) else 0.0


def find_best_split(x, rows, gradients, hessians, features, lam=1.0,
                    min_child_weight=1.0, backend=None):
    """Exact greedy search over ``features`` for the node holding ``rows``.

    Returns ``None`` when no split has positive gain with both children
    meeting ``min_child_weight``. Ties go to the lowest feature index, then
    the lowest threshold.
    """
    backend = backend or kernels.backend
    x = np.ascontiguousarray(x, dtype=np.float64)
    rows = np.sort(np.asarray(rows, dtype=np.intp))
    g = np.ascontiguousarray(gradients, dtype=np.float64)
    h = np.ascontiguousarray(hessians, dtype=np.float64)
    features = np.sort(np.asarray(features, dtype=np.intp))
    if len(rows) < 2 or len(features) == 0:
        return None
    node_of = np.full(len(x), -1, dtype=np.intp)
    node_of[rows] = 0
    orders = [rows[np.argsort(x[rows, f], kind="stable")] for f in features]
    best_gain = np.zeros(1)
    best_feature = np.full(1, -1, dtype=np.intp)
    best_threshold = np.zeros(1)
    backend.scan_level(x, orders, features, node_of, g, h,
                       np.array([_node_sums(g, rows)]), np.array([_node_sums(h, rows)]),
                       float(lam), float(min_child_weight),
                       best_gain, best_feature, best_threshold)
    if best_feature[0] < 0:
        return None
    return Split(int(best_feature[0]), float(best_threshold[0]), float(best_gain[0]))


def _grow_tree(x, orders_full, in_sample, features, g, h, cfg, backend):
    orders = [np.ascontiguousarray(o[in_sample[o]]) for o in (orders_full[f] for f in features)]
    node_of = np.where(in_sample, 0, -1).astype(np.intp)
    feature, threshold, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    level = [0]
    lam = float(cfg.lambda_l2)
    for depth in range(cfg.max_depth + 1):
        active = np.flatnonzero(node_of >= 0)
        slots = node_of[active]
        members = [active[slots == j] for j in range(len(level))]
        node_g = np.array([_node_sums(g, m) for m in members])
        node_h = np.array([_node_sums(h, m) for m in members])
        best_feature = np.full(len(level), -1, dtype=np.intp)
        best_threshold = np.zeros(len(level))
        if depth < cfg.max_depth:
            backend.scan_level(x, orders, features, node_of, g, h, node_g, node_h,
                               lam, float(cfg.min_child_weight),
                               np.zeros(len(level)), best_feature, best_threshold)
        next_level = []
        new_node_of = np.full_like(node_of, -1)
        for j, node in enumerate(level):
            f = int(best_feature[j])
            if f < 0:
                value[node] = -node_g[j] / (node_h[j] + lam)
                continue
            feature[node], threshold[node] = f, float(best_threshold[j])
            for side in (left, right):
                side[node] = len(value)
                feature.append(-1)
                threshold.append(0.0)
                left.append(-1)
                right.append(-1)
                value.append(0.0)
            rows = members[j]
            goes_left = x[rows, f] < best_threshold[j]
            new_node_of[rows[goes_left]] = len(next_level)
            new_node_of[rows[~goes_left]] = len(next_level) + 1
            next_level += [left[node], right[node]]
        if not next_level:
            break
        level, node_of = next_level, new_node_of
    return Tree(feature, threshold, left, right, value)


def _rmse(pred, y):
    return math.sqrt(float(np.mean((pred - y) ** 2)))


def fit_gbdt(train_f, train_y, val_f, val_y, cfg=GbdtConfig(), backend=None):
    """Boost up to ``n_estimators`` trees, stopping after ``patience`` rounds
    without a validation-RMSE improvement. ``best_round`` is the round with
    the lowest validation RMSE."""
    backend = backend or kernels.backend
    x = np.ascontiguousarray(train_f, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64)
    xv = np.ascontiguousarray(val_f, dtype=np.float64)
    yv = np.asarray(val_y, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("empty training set")
    if y.shape != (len(x),) or xv.ndim != 2 or yv.shape != (len(xv),):
        raise StructuralError("feature/target shapes do not line up")
    if xv.shape[1] != x.shape[1]:
        raise StructuralError("validation width differs from training width")
    if len(xv) == 0:
        raise ValueError("empty validation set")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(yv))):
        raise ValueError("non-finite targets")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xv))):
        raise ValueError("non-finite features")

    n, d = x.shape
    base = float(np.mean(y))
    orders_full = [np.argsort(x[:, f], kind="stable").astype(np.intp) for f in range(d)]
    n_rows = max(1, int(cfg.subsample * n))
    n_cols = max(1, int(cfg.colsample_bytree * d))
    h = np.ones(n)
    pred = np.full(n, base)
    pred_val = np.full(len(xv), base)
    trees, val_hist, train_hist = [], [], []
    best, best_round = math.inf, -1
    for m in range(cfg.n_estimators):
        rng = stream(cfg.seed, f"gbdt.round.{m}")
        in_sample = np.zeros(n, dtype=bool)
        in_sample[rng.permutation(n)[:n_rows]] = True
        features = np.sort(rng.permutation(d)[:n_cols]).astype(np.intp)
        g = pred - y
        tree = _grow_tree(x, orders_full, in_sample, features, g, h, cfg, backend)
        trees.append(tree)
        pred += cfg.learning_rate * tree.predict(x, backend)
        pred_val += cfg.learning_rate * tree.predict(xv, backend)
        train_hist.append(_rmse(pred, y))
        score = _rmse(pred_val, yv)
        val_hist.append(score)
        if score < best:
            best, best_round = score, m
        elif m - best_round >= cfg.early_stopping_patience:
            break
    return GbdtModel(base, trees, best_round, cfg.learning_rate, d, val_hist, train_hist)


def predict(model, f, backend=None):
    """``base_score + sum(learning_rate * tree(row))`` over trees ``0..best_round``."""
    x = np.ascontiguousarray(f, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise StructuralError(f"model expects {model.n_features} features, got {x.shape}")
    out = np.full(len(x), float(model.base_score))
    for tree in model.trees[: model.best_round + 1]:
        out += model.learning_rate * tree.predict(x, backend)
    return out
