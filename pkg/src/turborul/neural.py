"""Hand-written forward/backward kernels and training utilities.

Every layer is a pair of functions: ``*_forward`` returns the output and a
cache, ``*_backward`` maps the upstream gradient and that cache to input
and parameter gradients. Arrays are float64 throughout.

Shapes:
    dense   x [B, in],        W [in, out],      b [out]
    conv1d  x [B, C_in, T],   K [C_out, C_in, 3], b [C_out]   (same padding)
    lstm    x [B, T, n],      Wx [n, 4H], Wh [H, 4H], b [4H]  (gates i, f, g, o)
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError, StructuralError


# -- dense --------------------------------------------------------------------


def dense_forward(x, w, b):
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise StructuralError(f"dense shapes x{x.shape} W{w.shape} b{b.shape} do not agree")
    return x @ w + b, (x, w)


def dense_backward(dy, cache):
    x, w = cache
    return dy @ w.T, x.T @ dy, dy.sum(axis=0)


# -- 1-D convolution ------------------------------------------------------------


def _shifted(xt):
    # [B, T, C] -> [B, T, 3C]; column k*C + c holds x[c, t + k - 1] (zero outside)
    bsz, t, c = xt.shape
    xp = np.zeros((bsz, t + 2, c))
    xp[:, 1:-1] = xt
    return np.concatenate([xp[:, 0:t], xp[:, 1:t + 1], xp[:, 2:t + 2]], axis=2)


def conv1d_forward(x, k, b):
    """Cross-correlation with kernel length 3 and one zero of padding per side.

    Computed channels-last; the returned ``[B, C_out, T]`` array is a
    transposed view, so chained layers avoid copies.
    """
    if x.ndim != 3 or k.ndim != 3 or k.shape[2] != 3:
        raise StructuralError(f"conv1d expects x[B,C,T] and K[O,C,3], got {x.shape}, {k.shape}")
    if k.shape[1] != x.shape[1] or b.shape != (k.shape[0],):
        raise StructuralError(f"conv1d channel mismatch: x{x.shape} K{k.shape} b{b.shape}")
    bsz, c, t = x.shape
    cols = _shifted(x.transpose(0, 2, 1)).reshape(bsz * t, 3 * c)
    kmat = k.transpose(2, 1, 0).reshape(3 * c, k.shape[0])
    y = (cols @ kmat + b).reshape(bsz, t, k.shape[0])
    return y.transpose(0, 2, 1), (cols, kmat, k.shape, x.shape)


def conv1d_backward(dy, cache):
    cols, kmat, kshape, (bsz, c, t) = cache
    dyt = dy.transpose(0, 2, 1).reshape(bsz * t, kshape[0])
    dk = (cols.T @ dyt).reshape(3, c, kshape[0]).transpose(2, 1, 0)
    db = dyt.sum(axis=0)
    dcols = (dyt @ kmat.T).reshape(bsz, t, 3, c)
    dxp = np.zeros((bsz, t + 2, c))
    for j in range(3):
        dxp[:, j:j + t] += dcols[:, :, j]
    return dxp[:, 1:-1].transpose(0, 2, 1), np.ascontiguousarray(dk), db


# -- activations and dropout --------------------------------------------------


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dy, mask):
    return dy * mask


def dropout_forward(x, p, training, rng=None):
    """Inverted dropout; identity at inference or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout rate must lie in [0, 1)")
    if not training or p == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


# -- LSTM -----------------------------------------------------------------------


def lstm_forward(x, wx, wh, b):
    """Unroll a single LSTM layer from zero state; returns all hidden states."""
    if x.ndim != 3:
        raise StructuralError(f"lstm expects x[B,T,n], got {x.shape}")
    bsz, steps, n = x.shape
    hidden = wh.shape[0]
    if wx.shape != (n, 4 * hidden) or wh.shape != (hidden, 4 * hidden) or b.shape != (4 * hidden,):
        raise StructuralError(f"lstm parameter shapes Wx{wx.shape} Wh{wh.shape} b{b.shape} do not agree")
    xw = (x.reshape(bsz * steps, n) @ wx).reshape(bsz, steps, 4 * hidden) + b
    hs = np.empty((bsz, steps, hidden))
    cs = np.empty((bsz, steps, hidden))
    gates = np.empty((bsz, steps, 4 * hidden))
    tcs = np.empty((bsz, steps, hidden))
    h = np.zeros((bsz, hidden))
    c = np.zeros((bsz, hidden))
    H = hidden
    for t in range(steps):
        z = xw[:, t] + h @ wh
        gate = gates[:, t]
        gate[:, :H] = sigmoid(z[:, :H])
        gate[:, H:2 * H] = sigmoid(z[:, H:2 * H])
        gate[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
        gate[:, 3 * H:] = sigmoid(z[:, 3 * H:])
        c = gate[:, H:2 * H] * c + gate[:, :H] * gate[:, 2 * H:3 * H]
        tc = np.tanh(c)
        h = gate[:, 3 * H:] * tc
        if not (np.isfinite(c).all() and np.isfinite(h).all()):
            raise NumericError(f"non-finite LSTM state at time step {t + 1}")
        cs[:, t], tcs[:, t], hs[:, t] = c, tc, h
    return hs, (x, wx, wh, gates, cs, tcs, hs)


def lstm_backward(dhs, cache):
    """Backpropagation through time; ``dhs`` is the gradient w.r.t. every h_t."""
    x, wx, wh, gates, cs, tcs, hs = cache
    bsz, steps, n = x.shape
    H = wh.shape[0]
    dz_all = np.empty((bsz, steps, 4 * H))
    dwh = np.zeros_like(wh)
    dh_next = np.zeros((bsz, H))
    dc_next = np.zeros((bsz, H))
    for t in range(steps - 1, -1, -1):
        gate = gates[:, t]
        i, f, g, o = gate[:, :H], gate[:, H:2 * H], gate[:, 2 * H:3 * H], gate[:, 3 * H:]
        tc = tcs[:, t]
        c_prev = cs[:, t - 1] if t > 0 else np.zeros((bsz, H))
        h_prev = hs[:, t - 1] if t > 0 else np.zeros((bsz, H))
        dh = dhs[:, t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dz = dz_all[:, t]
        dz[:, :H] = dc * g * i * (1.0 - i)
        dz[:, H:2 * H] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * H:3 * H] = dc * i * (1.0 - g * g)
        dz[:, 3 * H:] = dh * tc * o * (1.0 - o)
        dwh += h_prev.T @ dz
        dh_next = dz @ wh.T
        dc_next = dc * f
    flat = dz_all.reshape(bsz * steps, 4 * H)
    dwx = x.reshape(bsz * steps, n).T @ flat
    db = flat.sum(axis=0)
    dx = (flat @ wx.T).reshape(bsz, steps, n)
    return dx, dwx, dwh, db


# -- loss -----------------------------------------------------------------------


def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise StructuralError(f"pred {pred.shape} and target {target.shape} differ")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


# -- optimisation -------------------------------------------------------------


class RMSprop:
    """RMSprop with weight decay folded into the gradient.

    ``g' = g + wd * p`` (only for parameters in ``decay``),
    ``acc = rho * acc + (1 - rho) * g'^2``, ``p -= lr * g' / (sqrt(acc) + eps)``.
    """

    def __init__(self, lr=1e-3, rho=0.99, eps=1e-8, weight_decay=1e-5, decay=None):
        self.lr = lr
        self.rho = rho
        self.eps = eps
        self.weight_decay = weight_decay
        self.decay = decay  # names receiving weight decay; None means all
        self.acc = {}

    def step(self, params, grads):
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise StructuralError(f"gradient shape {g.shape} != parameter {name} {p.shape}")
            if self.weight_decay and (self.decay is None or name in self.decay):
                g = g + self.weight_decay * p
            acc = self.acc.get(name)
            if acc is None:
                acc = self.acc[name] = np.zeros_like(p)
            acc *= self.rho
            acc += (1.0 - self.rho) * g * g
            p -= self.lr * g / (np.sqrt(acc) + self.eps)


@dataclass
class PlateauScheduler:
    """Halve the learning rate after ``patience`` epochs without relative improvement."""

    factor: float = 0.5
    patience: int = 5
    min_improvement: float = 1e-4
    best_loss: float = math.inf
    epochs_since_improve: int = 0

    def step(self, val_loss, lr):
        if val_loss < self.best_loss * (1.0 - self.min_improvement):
            self.best_loss = val_loss
            self.epochs_since_improve = 0
        else:
            self.epochs_since_improve += 1
        if self.epochs_since_improve > self.patience:
            self.epochs_since_improve = 0
            return lr * self.factor
        return lr


@dataclass
class EarlyStopper:
    """Track the best validation loss and snapshot parameters at each new best."""

    patience: int = 20
    max_epochs: int = 200
    best_loss: float = math.inf
    best_epoch: int = 0
    epoch: int = 0
    epochs_since_improve: int = 0
    best_params: dict = field(default=None, repr=False)

    def step(self, val_loss, params):
        """Record one epoch; return True to keep training."""
        self.epoch += 1
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = self.epoch
            self.epochs_since_improve = 0
            self.best_params = {k: v.copy() for k, v in params.items()}
        else:
            self.epochs_since_improve += 1
        return self.epochs_since_improve < self.patience and self.epoch < self.max_epochs


# -- gradient check -------------------------------------------------------------


def grad_check(fn, params, eps=1e-5, max_entries=None, rng=None):
    """Largest relative error between analytic and central-difference gradients.

    ``fn(params)`` returns ``(loss, grads)``. Relative error per entry is
    ``|a - n| / max(|a|, |n|, 1e-8)``. With ``max_entries`` only that many
    randomly chosen entries per tensor are perturbed (needs ``rng``).
    """
    _, grads = fn(params)
    grads = {k: np.array(v, copy=True) for k, v in grads.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        analytic = grads[name].reshape(-1)
        for i in idx:
            old = flat[i]
            flat[i] = old + eps
            up = fn(params)[0]
            flat[i] = old - eps
            down = fn(params)[0]
            flat[i] = old
            numeric = (up - down) / (2.0 * eps)
            a = analytic[i]
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


# -- checkpoints ----------------------------------------------------------------
#
#   magic   b"TRULCKP1"                      8 bytes
#   hlen    uint32 little-endian             4 bytes
#   header  UTF-8 JSON, hlen bytes: {"meta": {...},
#           "tensors": [{"name", "shape", "offset"}, ...]}   offset in bytes
#           from the start of the payload
#   payload float64 little-endian, tensors in header order, C order
_CKPT_MAGIC = b"TRULCKP1"


def save_checkpoint(path, params, meta=None):
    tensors, offset = [], 0
    for name, p in params.items():
        tensors.append({"name": name, "shape": list(p.shape), "offset": offset})
        offset += p.size * 8
    header = json.dumps({"meta": meta or {}, "tensors": tensors}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for p in params.values():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path):
    """Return ``(params, meta)``; params keep the saved order."""
    raw = Path(path).read_bytes()
    if raw[:8] != _CKPT_MAGIC:
        raise StructuralError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + hlen].decode("utf-8"))
    base = 12 + hlen
    params = {}
    for t in header["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(raw, dtype="<f8", count=count, offset=base + t["offset"])
        params[t["name"]] = arr.reshape(t["shape"]).astype(np.float64)
    return params, header["meta"]
