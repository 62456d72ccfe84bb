"""The 1D CNN and single-layer LSTM regressors and their training loop.

Both models take windows shaped ``[B, 30, n_sensors]`` and return one RUL
estimate per window (``[B, 1]``). The CNN transposes to channels-first
``[B, n_sensors, 30]`` internally.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import neural as nn
from .errors import NumericError, StructuralError
from .pipeline import WINDOW
from .rng import stream

LSTM_HIDDEN = 32


def _glorot(rng, shape, fan_in, fan_out):
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class _Model:
    kind = ""

    def __init__(self, params, n_sensors):
        self.params = params
        self.n_sensors = n_sensors
        self._cache = None

    @property
    def n_params(self):
        return int(sum(p.size for p in self.params.values()))

    @property
    def decay(self):
        """Parameter names that receive weight decay (weights, not biases)."""
        return {k for k in self.params if not k.endswith(".b")}

    def loss_and_grads(self, x, y, training=False, rng=None):
        pred = self.forward(x, training=training, rng=rng)
        loss, dpred = nn.mse_loss(pred[:, 0], y)
        return loss, self.backward(dpred[:, None])

    def predict(self, x, batch_size=512):
        x = np.asarray(x, dtype=np.float64)
        if len(x) == 0:
            return np.zeros(0)
        out = [self.forward(x[i:i + batch_size])[:, 0] for i in range(0, len(x), batch_size)]
        return np.concatenate(out)

    def _check_input(self, x):
        if x.ndim != 3 or x.shape[1] != WINDOW or x.shape[2] != self.n_sensors:
            raise StructuralError(
                f"{self.kind} expects windows [B, {WINDOW}, {self.n_sensors}], got {x.shape}"
            )


class CnnModel(_Model):
    """conv(n->32)-relu-drop, conv(32->64)-relu-drop, conv(64->64)-relu,
    flatten, dense(1920->128)-relu-drop, dense(128->1)."""

    kind = "cnn"
    dropout = 0.3

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        return self.forward_channels(x.transpose(0, 2, 1), training, rng)

    def forward_channels(self, x, training=False, rng=None):
        """Forward pass on channels-first input ``[B, n_sensors, 30]``."""
        p = self.params
        caches = []
        h = x
        for layer, drop in (("conv1", True), ("conv2", True), ("conv3", False)):
            h, c_conv = nn.conv1d_forward(h, p[f"{layer}.W"], p[f"{layer}.b"])
            h, c_relu = nn.relu_forward(h)
            c_drop = None
            if drop:
                h, c_drop = nn.dropout_forward(h, self.dropout, training, rng)
            caches.append((c_conv, c_relu, c_drop))
        shape = h.shape
        h = h.reshape(len(h), -1)
        h, c_fc1 = nn.dense_forward(h, p["fc1.W"], p["fc1.b"])
        h, c_relu1 = nn.relu_forward(h)
        h, c_drop1 = nn.dropout_forward(h, self.dropout, training, rng)
        out, c_fc2 = nn.dense_forward(h, p["fc2.W"], p["fc2.b"])
        self._cache = (caches, shape, c_fc1, c_relu1, c_drop1, c_fc2)
        return out

    def backward(self, dout):
        caches, shape, c_fc1, c_relu1, c_drop1, c_fc2 = self._cache
        grads = {}
        dh, grads["fc2.W"], grads["fc2.b"] = nn.dense_backward(dout, c_fc2)
        dh = nn.relu_backward(nn.dropout_backward(dh, c_drop1), c_relu1)
        dh, grads["fc1.W"], grads["fc1.b"] = nn.dense_backward(dh, c_fc1)
        dh = dh.reshape(shape)
        for layer, (c_conv, c_relu, c_drop) in zip(("conv3", "conv2", "conv1"), reversed(caches)):
            dh = nn.relu_backward(nn.dropout_backward(dh, c_drop), c_relu)
            dh, grads[f"{layer}.W"], grads[f"{layer}.b"] = nn.conv1d_backward(dh, c_conv)
        return {k: grads[k] for k in self.params}


class LstmModel(_Model):
    """LSTM(n->32) over the window; dropout(0.5) on h_T; dense 32->8->8->1."""

    kind = "lstm"
    dropout = 0.5

    def final_hidden(self, x):
        """h_T for every window, ``[B, 32]`` (inference mode)."""
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        p = self.params
        hs, _ = nn.lstm_forward(x, p["lstm.Wx"], p["lstm.Wh"], p["lstm.b"])
        return hs[:, -1]

    def forward(self, x, training=False, rng=None):
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        p = self.params
        hs, c_lstm = nn.lstm_forward(x, p["lstm.Wx"], p["lstm.Wh"], p["lstm.b"])
        h, c_drop = nn.dropout_forward(hs[:, -1], self.dropout, training, rng)
        h, c1 = nn.dense_forward(h, p["fc1.W"], p["fc1.b"])
        h, r1 = nn.relu_forward(h)
        h, c2 = nn.dense_forward(h, p["fc2.W"], p["fc2.b"])
        h, r2 = nn.relu_forward(h)
        out, c3 = nn.dense_forward(h, p["fc3.W"], p["fc3.b"])
        self._cache = (c_lstm, hs.shape, c_drop, c1, r1, c2, r2, c3)
        return out

    def backward(self, dout):
        c_lstm, hshape, c_drop, c1, r1, c2, r2, c3 = self._cache
        grads = {}
        dh, grads["fc3.W"], grads["fc3.b"] = nn.dense_backward(dout, c3)
        dh, grads["fc2.W"], grads["fc2.b"] = nn.dense_backward(nn.relu_backward(dh, r2), c2)
        dh, grads["fc1.W"], grads["fc1.b"] = nn.dense_backward(nn.relu_backward(dh, r1), c1)
        dhs = np.zeros(hshape)
        dhs[:, -1] = nn.dropout_backward(dh, c_drop)
        _, grads["lstm.Wx"], grads["lstm.Wh"], grads["lstm.b"] = nn.lstm_backward(dhs, c_lstm)
        return {k: grads[k] for k in self.params}


def build_cnn(n_sensors, seed=42):
    if n_sensors < 1:
        raise ValueError("n_sensors must be >= 1")
    params = {}
    for name, c_in, c_out in (("conv1", n_sensors, 32), ("conv2", 32, 64), ("conv3", 64, 64)):
        rng = stream(seed, f"cnn.{name}")
        params[f"{name}.W"] = _glorot(rng, (c_out, c_in, 3), c_in * 3, c_out * 3)
        params[f"{name}.b"] = np.zeros(c_out)
    for name, n_in, n_out in (("fc1", 64 * WINDOW, 128), ("fc2", 128, 1)):
        rng = stream(seed, f"cnn.{name}")
        params[f"{name}.W"] = _glorot(rng, (n_in, n_out), n_in, n_out)
        params[f"{name}.b"] = np.zeros(n_out)
    return CnnModel(params, n_sensors)


def build_lstm(n_sensors, seed=42, hidden=LSTM_HIDDEN):
    if n_sensors < 1:
        raise ValueError("n_sensors must be >= 1")
    rng = stream(seed, "lstm.gates")
    limit = 1.0 / math.sqrt(hidden)
    bias = np.zeros(4 * hidden)
    bias[hidden:2 * hidden] = 1.0  # forget gate
    params = {
        "lstm.Wx": rng.uniform(-limit, limit, size=(n_sensors, 4 * hidden)),
        "lstm.Wh": rng.uniform(-limit, limit, size=(hidden, 4 * hidden)),
        "lstm.b": bias,
    }
    for name, n_in, n_out in (("fc1", hidden, 8), ("fc2", 8, 8), ("fc3", 8, 1)):
        rng = stream(seed, f"lstm.{name}")
        params[f"{name}.W"] = _glorot(rng, (n_in, n_out), n_in, n_out)
        params[f"{name}.b"] = np.zeros(n_out)
    return LstmModel(params, n_sensors)


_BUILDERS = {"cnn": (build_cnn, CnnModel), "lstm": (build_lstm, LstmModel)}


def model_from_params(kind, params):
    try:
        cls = _BUILDERS[kind][1]
    except KeyError:
        raise ValueError(f"unknown neural model kind {kind!r}") from None
    key = "conv1.W" if kind == "cnn" else "lstm.Wx"
    n_sensors = params[key].shape[1] if kind == "cnn" else params[key].shape[0]
    return cls(dict(params), int(n_sensors))


def save_model(model, path, meta=None):
    nn.save_checkpoint(path, model.params, {"kind": model.kind, **(meta or {})})


def load_model(path):
    params, meta = nn.load_checkpoint(path)
    return model_from_params(meta.get("kind"), params), meta


# -- training -------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 1e-5
    max_epochs: int = 200
    plateau_factor: float = 0.5
    plateau_patience: int = 5
    patience: int = 20
    seed: int = 42
    rho: float = 0.99
    eps: float = 1e-8

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, max_epochs and patience must be >= 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    wall_time: float = 0.0

    def rows(self):
        return [
            (e + 1, self.train_loss[e], self.val_loss[e], self.lr[e])
            for e in range(len(self.train_loss))
        ]

    def to_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for epoch, tl, vl, lr in self.rows():
                w.writerow([epoch, repr(tl), repr(vl), repr(lr)])


def evaluate_loss(model, windows, batch_size=512):
    pred = model.predict(windows.x, batch_size)
    return nn.mse_loss(pred, windows.y)[0]


def train(model, train_windows, val_windows, cfg=TrainConfig(), log=None):
    """RMSprop + plateau scheduler + early stopping; returns the model with its
    best-validation parameters restored, and the per-epoch report."""
    if len(train_windows) == 0:
        raise ValueError("empty training set")
    if len(val_windows) == 0:
        raise ValueError("empty validation set")
    start = time.perf_counter()
    opt = nn.RMSprop(cfg.lr, cfg.rho, cfg.eps, cfg.weight_decay, decay=model.decay)
    sched = nn.PlateauScheduler(cfg.plateau_factor, cfg.plateau_patience)
    stopper = nn.EarlyStopper(cfg.patience, cfg.max_epochs)
    shuffle_rng = stream(cfg.seed, f"{model.kind}.shuffle")
    dropout_rng = stream(cfg.seed, f"{model.kind}.dropout")
    report = TrainReport()
    x, y = train_windows.x, train_windows.y
    n = len(x)
    lr = cfg.lr
    while True:
        epoch = stopper.epoch + 1
        order = shuffle_rng.permutation(n)
        total = 0.0
        for bi, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            try:
                loss, grads = model.loss_and_grads(x[idx], y[idx], training=True, rng=dropout_rng)
            except NumericError as exc:
                raise NumericError(f"epoch {epoch}, batch {bi}: {exc}") from None
            if not math.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}, batch {bi}")
            opt.step(model.params, grads)
            total += loss * len(idx)
        val_loss = evaluate_loss(model, val_windows)
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        report.train_loss.append(total / n)
        report.val_loss.append(val_loss)
        report.lr.append(lr)
        if log:
            log(f"{model.kind} epoch {epoch}: train {total / n:.4f} val {val_loss:.4f} lr {lr:.3g}")
        lr = opt.lr = sched.step(val_loss, lr)
        if not stopper.step(val_loss, model.params):
            break
    model.params = stopper.best_params
    report.best_epoch = stopper.best_epoch
    report.stopped_epoch = stopper.epoch
    report.wall_time = time.perf_counter() - start
    return model, report


def predict_rul(model, windows):
    """One RUL estimate per window, dropout off, no clipping."""
    x = windows.x if hasattr(windows, "x") else windows
    return model.predict(x)
