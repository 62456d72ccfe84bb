"""Experiment configuration: an INI file with one section per module.

Example::

    [experiment]
    subset = FD001          ; FD001 | FD003 | SYNTH
    model = lstm            ; raw_ridge | ridge_fe | poly_ridge | gbdt | cnn | lstm
    seed = 42
    out = runs/fd001
    data_root = /data/cmapss ; falls back to $TURBORUL_DATA

    [pipeline]
    max_rul = 130
    train_ratio = 0.8

    [ridge]
    alpha = 1.0

    [gbdt]
    n_estimators = 500
    max_depth = 6
    ...

    [train]
    batch_size = 64
    max_epochs = 200
    ...

    [synthetic]
    n_engines = 100
    ...

    [analysis]
    engine_id = 1
    n_windows = 150

Unset keys take the defaults of the matching dataclass. Seeds in
``[gbdt]``, ``[train]`` and ``[synthetic]`` default to the experiment seed.
Command-line ``--set section.key=value`` pairs override file values.
"""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

from .archs import TrainConfig
from .cmapss_io import SUBSETS, SyntheticSpec
from .experiment import MODELS, ModelSettings
from .gbdt import GbdtConfig
from .pipeline import RulConfig

DATA_ENV = "TURBORUL_DATA"


class UsageError(ValueError):
    """Invalid configuration or command-line usage."""


@dataclass(frozen=True)
class AnalysisConfig:
    engine_id: int | None = None
    n_windows: int = 150


@dataclass(frozen=True)
class ExperimentConfig:
    subset: str = "SYNTH"
    model: str = "lstm"
    seed: int = 42
    out: str = "runs"
    data_root: str | None = None
    rul: RulConfig = field(default_factory=RulConfig)
    train_ratio: float = 0.8
    settings: ModelSettings = field(default_factory=ModelSettings)
    synthetic: SyntheticSpec = field(default_factory=SyntheticSpec)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def resolved_data_root(self):
        return self.data_root or os.environ.get(DATA_ENV)

    def as_dict(self):
        return {
            "experiment": {"subset": self.subset, "model": self.model, "seed": self.seed},
            "pipeline": {"max_rul": self.rul.max_rul, "train_ratio": self.train_ratio},
            "ridge": {"alpha": self.settings.alpha},
            "gbdt": dataclasses.asdict(self.settings.gbdt),
            "train": dataclasses.asdict(self.settings.train),
            "synthetic": dataclasses.asdict(self.synthetic),
            "analysis": dataclasses.asdict(self.analysis),
        }

    def config_hash(self):
        """Digest of everything that affects results (not paths)."""
        blob = json.dumps(self.as_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(cls, section, values, defaults):
    kinds = {f.name: f.type for f in dataclasses.fields(cls)}
    out = dict(defaults)
    for key, raw in values.items():
        if key not in kinds:
            raise UsageError(f"unknown key [{section}] {key}")
        kind = kinds[key]
        try:
            if raw.strip().lower() in ("", "none"):
                out[key] = None
            elif "int" in str(kind):
                out[key] = int(raw)
            elif "float" in str(kind):
                out[key] = float(raw)
            else:
                out[key] = raw.strip()
        except ValueError:
            raise UsageError(f"[{section}] {key}: cannot parse {raw!r}") from None
    try:
        return cls(**out)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"[{section}] {exc}") from None


def load_config(path=None, overrides=()):
    """Build an :class:`ExperimentConfig` from an optional INI file plus
    ``section.key=value`` overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    if path is not None:
        if not os.path.isfile(path):
            raise UsageError(f"config file not found: {path}")
        parser.read(path)
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key.strip(), value.strip())

    known = {"experiment", "pipeline", "ridge", "gbdt", "train", "synthetic", "analysis"}
    for section in parser.sections():
        if section not in known:
            raise UsageError(f"unknown config section [{section}]")

    def sec(name):
        return dict(parser.items(name)) if parser.has_section(name) else {}

    exp = sec("experiment")
    subset = exp.pop("subset", "SYNTH").strip()
    model = exp.pop("model", "lstm").strip()
    out = exp.pop("out", "runs").strip()
    data_root = exp.pop("data_root", None)
    try:
        seed = int(exp.pop("seed", "42"))
    except ValueError:
        raise UsageError("[experiment] seed must be an integer") from None
    if exp:
        raise UsageError(f"unknown key(s) in [experiment]: {', '.join(exp)}")
    if subset not in SUBSETS:
        raise UsageError(f"subset must be one of {', '.join(SUBSETS)}, got {subset!r}")
    if model not in MODELS:
        raise UsageError(f"model must be one of {', '.join(MODELS)}, got {model!r}")

    pipe = sec("pipeline")
    try:
        rul = RulConfig(int(pipe.pop("max_rul", "130")))
        train_ratio = float(pipe.pop("train_ratio", "0.8"))
    except ValueError as exc:
        raise UsageError(f"[pipeline] {exc}") from None
    if pipe:
        raise UsageError(f"unknown key(s) in [pipeline]: {', '.join(pipe)}")
    if not 0.0 < train_ratio < 1.0:
        raise UsageError("[pipeline] train_ratio must lie in (0, 1)")

    ridge = sec("ridge")
    try:
        alpha = float(ridge.pop("alpha", "1.0"))
    except ValueError:
        raise UsageError("[ridge] alpha must be a number") from None
    if ridge:
        raise UsageError(f"unknown key(s) in [ridge]: {', '.join(ridge)}")

    seeded = {"seed": seed}
    settings = ModelSettings(
        alpha=alpha,
        gbdt=_coerce(GbdtConfig, "gbdt", sec("gbdt"), seeded),
        train=_coerce(TrainConfig, "train", sec("train"), seeded),
    )
    return ExperimentConfig(
        subset=subset,
        model=model,
        seed=seed,
        out=out,
        data_root=data_root.strip() if data_root else None,
        rul=rul,
        train_ratio=train_ratio,
        settings=settings,
        synthetic=_coerce(SyntheticSpec, "synthetic", sec("synthetic"), seeded),
        analysis=_coerce(AnalysisConfig, "analysis", sec("analysis"), {}),
    )
