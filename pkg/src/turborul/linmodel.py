"""Closed-form ridge regression with an unpenalized intercept."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import SolverError, StructuralError


@dataclass(frozen=True, eq=False)
class RidgeModel:
    weights: np.ndarray
    bias: float
    alpha: float
    column_names: tuple = ()

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("ridge weights must be a finite 1-D vector")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        object.__setattr__(self, "column_names", tuple(self.column_names))

    @property
    def n_features(self):
        return len(self.weights)

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "bias": self.bias,
            "weights": self.weights.tolist(),
            "column_names": list(self.column_names),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["weights"], dtype=np.float64), d["bias"], d["alpha"],
                   tuple(d.get("column_names", ())))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def fit_ridge(f, y, alpha=1.0, column_names=()):
    """Minimise ``||F w + b - y||^2 + alpha ||w||^2`` over ``(w, b)``.

    Solved on centered data with a Cholesky factorization of
    ``Fc^T Fc + alpha I``; the intercept follows as ``mean(y) - w . mean(F)``.
    """
    f = np.asarray(f, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if f.ndim != 2 or y.shape != (f.shape[0],):
        raise StructuralError(f"features {f.shape} and targets {y.shape} do not line up")
    if f.shape[0] < 1:
        raise ValueError("need at least one training row")
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in ridge inputs")

    f_mean = f.mean(axis=0)
    y_mean = y.mean()
    fc = f - f_mean
    gram = fc.T @ fc
    gram[np.diag_indices_from(gram)] += alpha
    rhs = fc.T @ (y - y_mean)
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
    except linalg.LinAlgError:
        raise SolverError(
            "normal equations are not positive definite (rank-deficient features); use alpha > 0"
        ) from None
    pivots = np.diag(factor[0]) ** 2
    if pivots.size and pivots.min() <= 1e-13 * pivots.max():
        raise SolverError(
            "normal equations are numerically singular (rank-deficient features); use alpha > 0"
        )
    w = linalg.cho_solve(factor, rhs, check_finite=False)
    b = y_mean - w @ f_mean
    return RidgeModel(w, b, float(alpha), tuple(column_names))


def predict(model, f):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.shape[1] != model.n_features:
        raise StructuralError(
            f"model expects {model.n_features} features, got shape {f.shape}"
        )
    return f @ model.weights + model.bias


def flatten_windows(x):
    """Time-major flattening: step 1's sensors, then step 2's, ..."""
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(len(x), -1)
