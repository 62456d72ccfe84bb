"""RMSE, MAE, R^2 and the asymmetric NASA score over per-engine predictions.

Errors are ``h = pred - truth``: positive ``h`` is a late (overestimated)
RUL and is penalised harder by the NASA score.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import StructuralError


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise StructuralError(f"prediction {pred.shape} and truth {truth.shape} must be equal-length vectors")
    if pred.size == 0:
        raise ValueError("no predictions to score")
    return pred, truth


def rmse(pred, truth):
    pred, truth = _pair(pred, truth)
    return math.sqrt(float(np.mean((pred - truth) ** 2)))


def mae(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def r2(pred, truth):
    pred, truth = _pair(pred, truth)
    ss_tot = float(np.sum((truth - truth.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 is undefined for a constant truth vector")
    return 1.0 - float(np.sum((pred - truth) ** 2)) / ss_tot


def nasa_penalty(h):
    """Per-engine penalty: ``exp(-h/13) - 1`` for h < 0, ``exp(h/10) - 1`` otherwise."""
    h = np.asarray(h, dtype=np.float64)
    with np.errstate(over="ignore"):
        return np.where(h < 0, np.expm1(-h / 13.0), np.expm1(h / 10.0))


def nasa_score(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.sum(nasa_penalty(pred - truth)))


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    r2: float
    nasa_score: float
    engine_ids: tuple
    y_true: tuple
    y_pred: tuple

    @property
    def errors(self):
        return tuple(p - t for p, t in zip(self.y_pred, self.y_true))

    def rows(self):
        return list(zip(self.engine_ids, self.y_true, self.y_pred, self.errors))

    def summary(self):
        return {"rmse": self.rmse, "mae": self.mae, "r2": self.r2, "nasa_score": self.nasa_score}

    def to_json(self, **extra):
        return json.dumps({**extra, "metrics": self.summary(), "n_engines": len(self.engine_ids)},
                          indent=2, sort_keys=True) + "\n"


def evaluate(pred, truth, engine_ids):
    pred, truth = _pair(pred, truth)
    engine_ids = tuple(int(e) for e in engine_ids)
    if len(engine_ids) != len(pred):
        raise StructuralError("one engine id per prediction required")
    order = np.argsort(engine_ids, kind="stable")
    return EvalReport(
        rmse=rmse(pred, truth),
        mae=mae(pred, truth),
        r2=r2(pred, truth),
        nasa_score=nasa_score(pred, truth),
        engine_ids=tuple(engine_ids[i] for i in order),
        y_true=tuple(float(truth[i]) for i in order),
        y_pred=tuple(float(pred[i]) for i in order),
    )
