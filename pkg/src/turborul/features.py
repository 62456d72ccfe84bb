"""Per-window summary statistics and degree-2 polynomial expansion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StructuralError
from .pipeline import WINDOW

STATS = ("mean", "std", "last", "delta", "slope")

_STEPS = np.arange(WINDOW, dtype=np.float64)
_CENTERED_STEPS = _STEPS - _STEPS.mean()
_STEP_SS = float(np.sum(_CENTERED_STEPS**2))  # 2247.5 for 30 steps


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    values: np.ndarray
    column_names: tuple

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        names = tuple(self.column_names)
        if values.ndim != 2 or values.shape[1] != len(names):
            raise StructuralError(
                f"{values.shape} feature array does not match {len(names)} column names"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_names", names)

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path, comment=None):
        header = ",".join(self.column_names)
        if comment:
            header = f"# {comment}\n{header}"
        np.savetxt(path, self.values, delimiter=",", header=header, comments="", fmt="%.17g")


def engineer_window_features(window):
    """Five statistics per sensor for a single ``[30, n]`` window.

    Returns a vector ordered sensor-major: ``mean, std, last, delta, slope``
    for sensor 0, then sensor 1, ...
    """
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 2:
        raise StructuralError("expected a [30, n] window")
    return engineer_features(window[None])[0]


def engineer_features(windows):
    """Vectorised :func:`engineer_window_features` over ``[N, 30, n]``.

    Slope is the least-squares slope against step indices 0..29; std is the
    population standard deviation.
    """
    w = np.asarray(windows, dtype=np.float64)
    if w.ndim != 3 or w.shape[1] != WINDOW:
        raise StructuralError(f"expected [N, {WINDOW}, n] windows, got {w.shape}")
    mean = w.mean(axis=1)
    std = w.std(axis=1)
    last = w[:, -1, :]
    delta = w[:, -1, :] - w[:, 0, :]
    slope = np.einsum("t,ntk->nk", _CENTERED_STEPS, w - mean[:, None, :]) / _STEP_SS
    return np.stack([mean, std, last, delta, slope], axis=2).reshape(len(w), -1)


def feature_matrix(windows, sensor_names):
    """Engineered features of a window array with named columns."""
    values = engineer_features(windows)
    names = [f"{s}_{stat}" for s in sensor_names for stat in STATS]
    return FeatureMatrix(values, names)


def polynomial_width(d, degree=2):
    if degree != 2:
        raise ValueError("only degree 2 is supported")
    return d + d * (d + 1) // 2


def polynomial_expand(f, degree=2):
    """Linear terms followed by all squares and pairwise products.

    Monomials are ordered ``x_i * x_j`` for ``i <= j`` in row-major order.
    No constant column (the ridge intercept covers it).
    """
    if degree != 2:
        raise ValueError("only degree 2 is supported")
    names = None
    if isinstance(f, FeatureMatrix):
        names = list(f.column_names)
        x = f.values
    else:
        x = np.asarray(f, dtype=np.float64)
    if x.ndim != 2:
        raise StructuralError("polynomial_expand expects a 2-D array")
    n, d = x.shape
    iu, ju = np.triu_indices(d)
    out = np.empty((n, polynomial_width(d)))
    out[:, :d] = x
    out[:, d:] = x[:, iu] * x[:, ju]
    if names is None:
        return out
    quad = [f"{names[i]}^2" if i == j else f"{names[i]}*{names[j]}" for i, j in zip(iu, ju)]
    return FeatureMatrix(out, names + quad)
