"""Shared preprocessing: RUL targets, sensor selection, z-scoring,
engine-level split and sliding windows.

Window arrays are laid out ``[N, 30, n_sensors]`` (time-major per window).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cmapss_io import EngineSeries
from .errors import StructuralError
from .rng import stream

WINDOW = 30
STD_FLOOR = 1e-8
SYNTH_VARIANCE_FLOOR = 1e-12

# 1-based sensor names dropped by subset
_DROPPED = {
    "FD001": (1, 5, 6, 10, 16, 18, 19),
    "FD003": (1, 5, 10, 16, 18, 19),
}


@dataclass(frozen=True)
class RulConfig:
    max_rul: int = 130

    def __post_init__(self):
        if self.max_rul < 1:
            raise ValueError("max_rul must be >= 1")


@dataclass(frozen=True)
class SensorSelection:
    kept: tuple  # 1-based sensor indices, ascending

    def __post_init__(self):
        kept = tuple(int(k) for k in self.kept)
        if not kept:
            raise ValueError("sensor selection is empty")
        if any(b <= a for a, b in zip(kept, kept[1:])) or kept[0] < 1 or kept[-1] > 21:
            raise ValueError(f"sensor indices must be strictly increasing in 1..21: {kept}")
        object.__setattr__(self, "kept", kept)

    @property
    def columns(self):
        """0-based column positions in the 21-sensor block."""
        return np.asarray(self.kept, dtype=np.intp) - 1

    @property
    def names(self):
        return [f"s{k}" for k in self.kept]

    def __len__(self):
        return len(self.kept)


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-column z-scoring parameters (population std, floored)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        std = np.array(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise StructuralError("scaler mean/std must be 1-D and equal length")
        if np.any(std < STD_FLOOR):
            raise ValueError("scaler std below floor")
        mean.flags.writeable = False
        std.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @classmethod
    def fit(cls, rows):
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or len(rows) == 0:
            raise ValueError("scaler needs a nonempty 2-D array of rows")
        mean = rows.mean(axis=0)
        std = np.maximum(rows.std(axis=0), STD_FLOOR)
        return cls(mean, std)

    def transform(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape[-1] != len(self.mean):
            raise StructuralError(
                f"scaler fitted on {len(self.mean)} columns, got {values.shape[-1]}"
            )
        return (values - self.mean) / self.std

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))

    def __len__(self):
        return len(self.mean)


@dataclass(frozen=True, eq=False)
class NormalizedSeries:
    """Selected and z-scored sensor values of one engine, ``[L, k]``."""

    engine_id: int
    values: np.ndarray

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class EngineSplit:
    train_ids: tuple
    val_ids: tuple
    seed: int


@dataclass(frozen=True, eq=False)
class WindowSet:
    x: np.ndarray  # [N, 30, k]
    y: np.ndarray  # [N]
    engine_of: np.ndarray  # [N]

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        y = np.ascontiguousarray(self.y, dtype=np.float64)
        eng = np.ascontiguousarray(self.engine_of, dtype=np.int64)
        if x.ndim != 3 or x.shape[1] != WINDOW:
            raise StructuralError(f"windows must be [N, {WINDOW}, k], got {x.shape}")
        if y.shape != (len(x),) or eng.shape != (len(x),):
            raise StructuralError("labels and engine ids must have one entry per window")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "engine_of", eng)

    def __len__(self):
        return len(self.x)

    @property
    def n_sensors(self):
        return self.x.shape[2]

    def subset(self, index):
        return WindowSet(self.x[index], self.y[index], self.engine_of[index])

    def __eq__(self, other):
        if not isinstance(other, WindowSet):
            return NotImplemented
        return (
            np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.engine_of, other.engine_of)
        )

    __hash__ = None


# -- labels and selection -----------------------------------------------------


def compute_rul_labels(series, cfg=RulConfig()):
    """Piecewise-linear target ``min(L - t, max_rul)`` for cycles ``t = 1..L``."""
    n = len(series)
    if n == 0:
        raise ValueError("empty series")
    remaining = np.arange(n - 1, -1, -1, dtype=np.float64)
    return np.minimum(remaining, float(cfg.max_rul))


def select_sensors(bundle):
    if bundle.subset_id in _DROPPED:
        dropped = set(_DROPPED[bundle.subset_id])
        return SensorSelection(tuple(k for k in range(1, 22) if k not in dropped))
    if bundle.subset_id != "SYNTH":
        raise ValueError(f"unknown subset {bundle.subset_id!r}")
    rows = np.concatenate([s.sensors for s in bundle.train])
    var = rows.var(axis=0)
    return SensorSelection(tuple(int(j) + 1 for j in np.flatnonzero(var >= SYNTH_VARIANCE_FLOOR)))


# -- scaling ------------------------------------------------------------------


def fit_scaler(train, sel):
    """Fit z-scoring on every row of the given (training-split) engines."""
    train = list(train)
    if not train:
        raise ValueError("no training engines to fit the scaler on")
    rows = np.concatenate([s.sensors[:, sel.columns] for s in train])
    return Scaler.fit(rows)


def apply_scaler(scaler, series, sel):
    """Select sensors and z-score one raw engine series.

    Refuses already-normalized input: z-scoring twice is not a no-op.
    """
    if isinstance(series, NormalizedSeries):
        raise StructuralError(f"engine {series.engine_id} is already normalized")
    if not isinstance(series, EngineSeries):
        raise TypeError("apply_scaler expects an EngineSeries")
    if len(sel) != len(scaler):
        raise StructuralError(f"selection has {len(sel)} sensors, scaler {len(scaler)}")
    values = scaler.transform(series.sensors[:, sel.columns])
    values.flags.writeable = False
    return NormalizedSeries(series.engine_id, values)


# -- split --------------------------------------------------------------------


def split_engines(ids, ratio=0.8, seed=42):
    """Seeded shuffle of the ascending ids, then a prefix split."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie in (0, 1)")
    ids = sorted(int(i) for i in ids)
    if len(ids) < 2:
        raise ValueError("need at least two engines to split")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate engine ids")
    order = stream(seed, "pipeline.split").permutation(len(ids))
    n_train = int(round(ratio * len(ids)))
    n_train = min(max(n_train, 1), len(ids) - 1)
    shuffled = [ids[k] for k in order]
    return EngineSplit(
        tuple(sorted(shuffled[:n_train])), tuple(sorted(shuffled[n_train:])), int(seed)
    )


# -- windows ------------------------------------------------------------------


def _empty_windows(n_sensors):
    return WindowSet(
        np.zeros((0, WINDOW, n_sensors)), np.zeros(0), np.zeros(0, dtype=np.int64)
    )


def make_windows(series, labels, size=WINDOW, stride=1):
    """Stride-``stride`` windows over one normalized engine.

    Window ``k`` covers rows ``k*stride .. k*stride + size - 1`` and carries
    the label of its last row. Engines shorter than ``size`` give no windows.
    """
    if size != WINDOW:
        raise ValueError(f"window length is fixed at {WINDOW}")
    if not isinstance(series, NormalizedSeries):
        raise StructuralError("make_windows expects a normalized series")
    labels = np.asarray(labels, dtype=np.float64)
    if len(labels) != len(series):
        raise StructuralError("one label per cycle required")
    n_sensors = series.values.shape[1]
    if len(series) < size:
        return _empty_windows(n_sensors)
    view = np.lib.stride_tricks.sliding_window_view(series.values, size, axis=0)
    x = view[::stride].transpose(0, 2, 1)
    y = labels[size - 1 :: stride]
    return WindowSet(x, y, np.full(len(x), series.engine_id))


def concat_windows(sets, n_sensors):
    sets = [s for s in sets if len(s)]
    if not sets:
        return _empty_windows(n_sensors)
    return WindowSet(
        np.concatenate([s.x for s in sets]),
        np.concatenate([s.y for s in sets]),
        np.concatenate([s.engine_of for s in sets]),
    )


def engine_windows(engines, sel, scaler, cfg=RulConfig()):
    """Windows of several training engines, ordered by (engine, start)."""
    parts = []
    for s in sorted(engines, key=lambda e: e.engine_id):
        norm = apply_scaler(scaler, s, sel)
        parts.append(make_windows(norm, compute_rul_labels(s, cfg)))
    return concat_windows(parts, len(sel))


def last_window(norm):
    """Final 30 rows of a normalized engine, front-padded with zeros."""
    values = norm.values
    out = np.zeros((WINDOW, values.shape[1]))
    tail = values[-WINDOW:]
    out[WINDOW - len(tail):] = tail
    return out


def make_test_windows(series, sel, scaler, test_rul, cfg=RulConfig()):
    """One window per test engine, labeled with the capped true RUL."""
    series = list(series)
    test_rul = list(test_rul)
    if len(series) != len(test_rul):
        raise StructuralError(f"{len(series)} test engines but {len(test_rul)} labels")
    if not series:
        return _empty_windows(len(sel))
    x = np.stack([last_window(apply_scaler(scaler, s, sel)) for s in series])
    y = np.minimum(np.asarray(test_rul, dtype=np.float64), float(cfg.max_rul))
    return WindowSet(x, y, np.array([s.engine_id for s in series]))


# -- full preparation ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PreparedData:
    subset_id: str
    selection: SensorSelection
    split: EngineSplit
    scaler: Scaler
    train: WindowSet
    val: WindowSet
    test: WindowSet


def prepare(bundle, cfg=RulConfig(), seed=42, ratio=0.8):
    """Run the whole preprocessing chain on a bundle.

    The scaler only ever sees rows of the training-split engines.
    """
    sel = select_sensors(bundle)
    split = split_engines([s.engine_id for s in bundle.train], ratio, seed)
    train_ids = set(split.train_ids)
    train_engines = [s for s in bundle.train if s.engine_id in train_ids]
    val_engines = [s for s in bundle.train if s.engine_id not in train_ids]
    scaler = fit_scaler(train_engines, sel)
    return PreparedData(
        subset_id=bundle.subset_id,
        selection=sel,
        split=split,
        scaler=scaler,
        train=engine_windows(train_engines, sel, scaler, cfg),
        val=engine_windows(val_engines, sel, scaler, cfg),
        test=make_test_windows(bundle.test, sel, scaler, bundle.test_rul, cfg),
    )


# -- WindowSet binary layout --------------------------------------------------
#
#   magic  b"TRULWIN1"                 8 bytes
#   N, T, K                            3 x uint64, little-endian
#   N rows of (T*K + 2) float64 LE:    flattened window (time-major),
#                                      label, engine id
_WIN_MAGIC = b"TRULWIN1"


def write_windows(ws, path):
    n, t, k = ws.x.shape
    body = np.empty((n, t * k + 2), dtype="<f8")
    body[:, : t * k] = ws.x.reshape(n, t * k)
    body[:, t * k] = ws.y
    body[:, t * k + 1] = ws.engine_of
    with open(path, "wb") as fh:
        fh.write(_WIN_MAGIC)
        fh.write(struct.pack("<3Q", n, t, k))
        fh.write(body.tobytes())


def read_windows(path):
    raw = Path(path).read_bytes()
    if raw[:8] != _WIN_MAGIC:
        raise StructuralError(f"{path}: not a window file")
    n, t, k = struct.unpack("<3Q", raw[8:32])
    body = np.frombuffer(raw, dtype="<f8", offset=32)
    if body.size != n * (t * k + 2):
        raise StructuralError(f"{path}: truncated window file")
    body = body.reshape(n, t * k + 2)
    return WindowSet(
        body[:, : t * k].reshape(n, t, k).astype(np.float64),
        body[:, t * k].astype(np.float64),
        body[:, t * k + 1].astype(np.int64),
    )
