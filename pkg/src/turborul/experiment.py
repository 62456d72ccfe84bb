"""Model-name registry: fit, predict, save and load any of the six models
on a :class:`~turborul.pipeline.PreparedData`."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import archs, gbdt, linmodel
from .features import STATS, FeatureMatrix, engineer_features, polynomial_expand
from .metrics import evaluate
from .pipeline import Scaler

MODELS = ("raw_ridge", "ridge_fe", "poly_ridge", "gbdt", "cnn", "lstm")
NEURAL = ("cnn", "lstm")
_RIDGE_MODES = {"raw_ridge": "raw", "ridge_fe": "engineered", "poly_ridge": "poly"}


@dataclass(frozen=True)
class ModelSettings:
    alpha: float = 1.0
    gbdt: gbdt.GbdtConfig = field(default_factory=gbdt.GbdtConfig)
    train: archs.TrainConfig = field(default_factory=archs.TrainConfig)


def check_model_name(name):
    if name not in MODELS:
        raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODELS)}")
    return name


def model_filename(subset, name):
    return f"{subset}_{name}" + (".ckpt" if name in NEURAL else ".json")


def _raw_names(sensor_names):
    return [f"t{t}_{s}" for t in range(1, 31) for s in sensor_names]


def _fe_names(sensor_names):
    return [f"{s}_{stat}" for s in sensor_names for stat in STATS]


class RidgePipeline:
    """Windows -> (flatten | engineered [-> poly]) features -> ridge.

    Features are z-scored with a scaler fitted on training rows; the
    polynomial expansion is applied after that scaling.
    """

    def __init__(self, name, feature_scaler, model):
        self.name = name
        self.mode = _RIDGE_MODES[name]
        self.feature_scaler = feature_scaler
        self.model = model

    @staticmethod
    def base_features(name, x):
        return linmodel.flatten_windows(x) if _RIDGE_MODES[name] == "raw" else engineer_features(x)

    @classmethod
    def fit(cls, name, data, alpha):
        sensors = data.selection.names
        f = cls.base_features(name, data.train.x)
        scaler = Scaler.fit(f)
        f = scaler.transform(f)
        names = _raw_names(sensors) if _RIDGE_MODES[name] == "raw" else _fe_names(sensors)
        if _RIDGE_MODES[name] == "poly":
            fm = polynomial_expand(FeatureMatrix(f, names))
            f, names = fm.values, fm.column_names
        return cls(name, scaler, linmodel.fit_ridge(f, data.train.y, alpha, names))

    def transform(self, x):
        f = self.feature_scaler.transform(self.base_features(self.name, x))
        return polynomial_expand(f) if self.mode == "poly" else f

    def predict(self, x):
        return linmodel.predict(self.model, self.transform(x))

    def to_dict(self):
        return {"kind": self.name, "feature_scaler": self.feature_scaler.to_dict(),
                "ridge": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], Scaler.from_dict(d["feature_scaler"]),
                   linmodel.RidgeModel.from_dict(d["ridge"]))


class GbdtPipeline:
    """Windows -> engineered features (unscaled) -> boosted trees."""

    name = "gbdt"

    def __init__(self, model):
        self.model = model

    @classmethod
    def fit(cls, data, cfg):
        return cls(gbdt.fit_gbdt(engineer_features(data.train.x), data.train.y,
                                 engineer_features(data.val.x), data.val.y, cfg))

    def predict(self, x):
        return gbdt.predict(self.model, engineer_features(x))

    def to_dict(self):
        return {"kind": "gbdt", "gbdt": self.model.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(gbdt.GbdtModel.from_dict(d["gbdt"]))


def fit_model(name, data, settings=ModelSettings(), log=None):
    """Fit model ``name``; returns ``(fitted, TrainReport or None)``."""
    check_model_name(name)
    if name in _RIDGE_MODES:
        return RidgePipeline.fit(name, data, settings.alpha), None
    if name == "gbdt":
        return GbdtPipeline.fit(data, settings.gbdt), None
    build = archs.build_cnn if name == "cnn" else archs.build_lstm
    model = build(data.train.n_sensors, settings.train.seed)
    return archs.train(model, data.train, data.val, settings.train, log=log)


def predict_windows(fitted, windows):
    x = windows.x if hasattr(windows, "x") else windows
    if len(x) == 0:
        return np.zeros(0)
    return fitted.predict(x)


def evaluate_test(fitted, data):
    pred = predict_windows(fitted, data.test)
    return evaluate(pred, data.test.y, data.test.engine_of)


def save_fitted(fitted, path, meta=None):
    meta = dict(meta or {})
    if isinstance(fitted, (archs.CnnModel, archs.LstmModel)):
        archs.save_model(fitted, path, meta)
        return
    payload = {**meta, **fitted.to_dict()}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_fitted(path):
    """Inverse of :func:`save_fitted`; returns ``(fitted, meta)``."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head == b"TRULCKP1":
        return archs.load_model(path)
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind in _RIDGE_MODES:
        return RidgePipeline.from_dict(d), d
    if kind == "gbdt":
        return GbdtPipeline.from_dict(d), d
    raise ValueError(f"{path}: unknown model kind {kind!r}")
