"""Reading, writing and synthesising C-MAPSS-format run-to-failure data.

A C-MAPSS text file holds one row per engine per cycle with 26
whitespace-separated numeric columns::

    engine_id  cycle  setting1..setting3  s1..s21

Test subsets come with a separate label file: one integer per line, the
true RUL at the last observed cycle of the matching test engine.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParseError, StructuralError
from .rng import stream

N_SETTINGS = 3
N_SENSORS = 21
N_FIELDS = 2 + N_SETTINGS + N_SENSORS

SUBSETS = ("FD001", "FD003", "SYNTH")
REAL_SUBSET_ENGINES = 100


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class EngineSeries:
    """One engine's trajectory; row ``k`` is cycle ``k + 1``."""

    engine_id: int
    settings: np.ndarray  # [L, 3]
    sensors: np.ndarray  # [L, 21]

    def __post_init__(self):
        if self.engine_id < 1:
            raise StructuralError(f"engine_id must be >= 1, got {self.engine_id}")
        settings = _frozen(self.settings)
        sensors = _frozen(self.sensors)
        if settings.ndim != 2 or settings.shape[1] != N_SETTINGS:
            raise StructuralError(f"engine {self.engine_id}: settings must be [L, {N_SETTINGS}]")
        if sensors.ndim != 2 or sensors.shape[1] != N_SENSORS:
            raise StructuralError(f"engine {self.engine_id}: sensors must be [L, {N_SENSORS}]")
        if len(settings) != len(sensors) or len(sensors) == 0:
            raise StructuralError(f"engine {self.engine_id}: empty or ragged series")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "sensors", sensors)

    def __len__(self):
        return len(self.sensors)

    @property
    def cycles(self):
        return np.arange(1, len(self) + 1)

    def __eq__(self, other):
        if not isinstance(other, EngineSeries):
            return NotImplemented
        return (
            self.engine_id == other.engine_id
            and np.array_equal(self.settings, other.settings)
            and np.array_equal(self.sensors, other.sensors)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    subset_id: str
    train: tuple
    test: tuple
    test_rul: tuple

    def __post_init__(self):
        if self.subset_id not in SUBSETS:
            raise ValueError(f"unknown subset {self.subset_id!r}; expected one of {SUBSETS}")
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "test", tuple(self.test))
        object.__setattr__(self, "test_rul", tuple(int(r) for r in self.test_rul))
        if len(self.test_rul) != len(self.test):
            raise StructuralError(
                f"{len(self.test)} test engines but {len(self.test_rul)} RUL labels"
            )
        if any(r < 0 for r in self.test_rul):
            raise ValueError("test RUL labels must be nonnegative")
        if self.subset_id != "SYNTH":
            for name, part in (("train", self.train), ("test", self.test)):
                if len(part) != REAL_SUBSET_ENGINES:
                    raise StructuralError(
                        f"{self.subset_id} {name} must hold {REAL_SUBSET_ENGINES} engines, got {len(part)}"
                    )

    def __eq__(self, other):
        if not isinstance(other, DatasetBundle):
            return NotImplemented
        return (
            self.subset_id == other.subset_id
            and self.train == other.train
            and self.test == other.test
            and self.test_rul == other.test_rul
        )

    __hash__ = None


# -- parsing ------------------------------------------------------------------


def _as_text(data):
    if isinstance(data, (bytes, bytearray, memoryview)):
        return bytes(data).decode("ascii", errors="strict")
    if hasattr(data, "read"):
        return _as_text(data.read())
    return str(data)


def _parse_rows(text):
    """Yield ``(lineno, engine_id, cycle, values[24])`` for non-blank lines."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != N_FIELDS:
            raise ParseError(f"expected {N_FIELDS} fields, found {len(parts)}", lineno)
        try:
            nums = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(f"non-numeric field ({exc})", lineno) from None
        if not all(np.isfinite(nums)):
            raise ParseError("non-finite value", lineno)
        engine, cycle = nums[0], nums[1]
        if engine != int(engine) or cycle != int(cycle):
            raise ParseError("engine id and cycle must be integers", lineno)
        if engine < 1 or cycle < 1:
            raise ParseError("engine id and cycle must be >= 1", lineno)
        yield lineno, int(engine), int(cycle), nums[2:]


def parse_series(data):
    """Parse a C-MAPSS data file (train or test) into a list of EngineSeries.

    Rows must be grouped by engine with cycles 1, 2, 3, ... Engine ids need
    not be contiguous, but an id may not reappear after another engine's rows.
    """
    groups = []
    seen = set()
    current = None
    for lineno, engine, cycle, values in _parse_rows(_as_text(data)):
        if current is None or engine != current[0]:
            if engine in seen:
                raise StructuralError(f"engine {engine}: rows are not contiguous (line {lineno})")
            seen.add(engine)
            current = (engine, [])
            groups.append(current)
        rows = current[1]
        if cycle != len(rows) + 1:
            raise StructuralError(
                f"engine {engine}: expected cycle {len(rows) + 1}, found {cycle} (line {lineno})"
            )
        rows.append(values)
    out = []
    for engine, rows in groups:
        arr = np.asarray(rows, dtype=np.float64)
        out.append(EngineSeries(engine, arr[:, :N_SETTINGS], arr[:, N_SETTINGS:]))
    return out


def parse_train(data):
    return parse_series(data)


def parse_rul(data):
    labels = []
    for lineno, line in enumerate(_as_text(data).splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 1:
            raise ParseError(f"expected one RUL value, found {len(parts)}", lineno)
        try:
            value = float(parts[0])
        except ValueError:
            raise ParseError(f"non-numeric RUL {parts[0]!r}", lineno) from None
        if not np.isfinite(value) or value != int(value):
            raise ParseError(f"RUL must be an integer, got {parts[0]!r}", lineno)
        if value < 0:
            raise ValueError(f"line {lineno}: negative RUL label {parts[0]}")
        labels.append(int(value))
    return labels


def parse_test(data, rul):
    series = parse_series(data)
    labels = parse_rul(rul)
    if len(series) != len(labels):
        raise StructuralError(f"{len(series)} test engines but {len(labels)} RUL labels")
    return series, labels


def _data_files(root, subset):
    root = Path(root)
    return (
        root / f"train_{subset}.txt",
        root / f"test_{subset}.txt",
        root / f"RUL_{subset}.txt",
    )


def load_subset(root, subset):
    """Load ``train_<subset>.txt``, ``test_<subset>.txt`` and ``RUL_<subset>.txt``."""
    if subset not in ("FD001", "FD003"):
        raise ValueError(f"only FD001 and FD003 are read from disk, got {subset!r}")
    train_path, test_path, rul_path = _data_files(root, subset)
    train = parse_train(train_path.read_bytes())
    test, labels = parse_test(test_path.read_bytes(), rul_path.read_bytes())
    return DatasetBundle(subset, train, test, labels)


def subset_available(root, subset):
    return root is not None and all(p.is_file() for p in _data_files(root, subset))


def subset_digest(root, subset):
    h = hashlib.sha256()
    for path in _data_files(root, subset):
        h.update(path.read_bytes())
    return h.hexdigest()


# -- writing ------------------------------------------------------------------


def _fmt(x):
    # repr is the shortest string that parses back to the same double
    return repr(float(x))


def format_series(series_list):
    lines = []
    for s in series_list:
        for k in range(len(s)):
            fields = [str(s.engine_id), str(k + 1)]
            fields += [_fmt(v) for v in s.settings[k]]
            fields += [_fmt(v) for v in s.sensors[k]]
            lines.append(" ".join(fields))
    return ("\n".join(lines) + "\n") if lines else ""


def format_rul(labels):
    return "".join(f"{int(r)}\n" for r in labels)


def write_bundle(bundle, root):
    """Write a bundle as the three C-MAPSS text files; returns their paths."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    paths = _data_files(root, bundle.subset_id)
    paths[0].write_text(format_series(bundle.train))
    paths[1].write_text(format_series(bundle.test))
    paths[2].write_text(format_rul(bundle.test_rul))
    return paths


def read_bundle(root, subset):
    """Inverse of :func:`write_bundle` for any subset name (including SYNTH)."""
    train_path, test_path, rul_path = _data_files(root, subset)
    train = parse_train(train_path.read_bytes())
    test, labels = parse_test(test_path.read_bytes(), rul_path.read_bytes())
    return DatasetBundle(subset, train, test, labels)


# -- synthetic data -----------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic degradation dataset.

    Sensors ``s1..s<n_sensors>`` are active channels; ``n_constant`` of them
    (picked by the seed) are emitted as constants, and so are all channels
    beyond ``n_sensors``. ``drift`` is ``"linear"``, ``"exponential"`` or
    ``"mixed"`` (per-sensor choice).
    """

    n_engines: int = 20
    n_sensors: int = 14
    min_life: int = 128
    max_life: int = 362
    noise_std: float = 0.05
    seed: int = 42
    n_constant: int = 0
    drift: str = "mixed"
    n_test_engines: int | None = None
    min_test_cycles: int = 31

    def __post_init__(self):
        if self.n_engines < 1 or self.n_sensors < 1:
            raise ValueError("n_engines and n_sensors must be positive")
        if self.n_sensors > N_SENSORS:
            raise ValueError(f"n_sensors must be <= {N_SENSORS}")
        if not (1 <= self.min_life <= self.max_life):
            raise ValueError("need 1 <= min_life <= max_life")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")
        if not (0 <= self.n_constant <= self.n_sensors):
            raise ValueError("n_constant must lie in [0, n_sensors]")
        if self.drift not in ("linear", "exponential", "mixed"):
            raise ValueError(f"unknown drift {self.drift!r}")
        if self.min_test_cycles < 1:
            raise ValueError("min_test_cycles must be >= 1")


def _sensor_profile(rng, spec):
    base = rng.uniform(5.0, 50.0, size=N_SENSORS)
    direction = rng.choice([-1.0, 1.0], size=spec.n_sensors)
    amplitude = rng.uniform(0.5, 3.0, size=spec.n_sensors)
    if spec.drift == "mixed":
        exponential = rng.random(spec.n_sensors) < 0.5
    else:
        exponential = np.full(spec.n_sensors, spec.drift == "exponential")
    constant = np.zeros(N_SENSORS, dtype=bool)
    constant[spec.n_sensors:] = True
    if spec.n_constant:
        picks = rng.permutation(spec.n_sensors)[: spec.n_constant]
        constant[np.sort(picks)] = True
    return base, direction, amplitude, exponential, constant


def _engine(rng, spec, profile, engine_id, life, n_cycles):
    base, direction, amplitude, exponential, constant = profile
    t = np.arange(1, n_cycles + 1, dtype=np.float64)
    frac = t / life
    offsets = rng.normal(0.0, 0.1, size=spec.n_sensors)
    sharpness = rng.uniform(3.0, 6.0, size=spec.n_sensors)
    sensors = np.empty((n_cycles, N_SENSORS))
    for j in range(N_SENSORS):
        if constant[j]:
            sensors[:, j] = base[j]
            continue
        if exponential[j]:
            k = sharpness[j]
            ramp = np.expm1(k * frac) / np.expm1(k)
        else:
            ramp = frac
        level = base[j] + offsets[j] + direction[j] * amplitude[j] * ramp
        if spec.noise_std:
            level = level + rng.normal(0.0, spec.noise_std, size=n_cycles)
        sensors[:, j] = level
    settings = rng.normal(0.0, 0.002, size=(n_cycles, N_SETTINGS))
    settings[:, 2] = 100.0
    return EngineSeries(engine_id, settings, sensors)


def generate_synthetic(spec: SyntheticSpec) -> DatasetBundle:
    """Deterministic synthetic run-to-failure bundle (subset ``SYNTH``).

    Identical specs give bit-identical bundles. Test engines are full
    trajectories truncated at a random cycle in ``[min_test_cycles, life]``
    with ``test_rul = life - truncation``.
    """
    rng = stream(spec.seed, "synth.profile")
    profile = _sensor_profile(rng, spec)
    life_rng = stream(spec.seed, "synth.life")
    train_rng = stream(spec.seed, "synth.train")
    test_rng = stream(spec.seed, "synth.test")

    train = []
    for e in range(spec.n_engines):
        life = int(life_rng.integers(spec.min_life, spec.max_life + 1))
        train.append(_engine(train_rng, spec, profile, e + 1, life, life))

    n_test = spec.n_engines if spec.n_test_engines is None else spec.n_test_engines
    test, labels = [], []
    for e in range(n_test):
        life = int(life_rng.integers(spec.min_life, spec.max_life + 1))
        lo = min(spec.min_test_cycles, life)
        cut = int(test_rng.integers(lo, life + 1))
        test.append(_engine(test_rng, spec, profile, e + 1, life, cut))
        labels.append(life - cut)
    return DatasetBundle("SYNTH", train, test, labels)
