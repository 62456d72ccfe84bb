"""Command-line entry point: ``turborul {prepare,train,evaluate,analyze,synth}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import shutil
import sys
from pathlib import Path

from . import analysis, cmapss_io, experiment, pipeline
from .archs import LstmModel
from .config import DATA_ENV, UsageError, load_config
from .errors import NumericError, ParseError, SolverError, StructuralError
from .features import feature_matrix
from .pipeline import EngineSplit, PreparedData, Scaler, SensorSelection

log = logging.getLogger("turborul")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


# -- data loading and caching ---------------------------------------------------


def load_bundle(cfg):
    if cfg.subset == "SYNTH":
        return cmapss_io.generate_synthetic(cfg.synthetic)
    root = cfg.resolved_data_root()
    if not root:
        raise UsageError(f"{cfg.subset} needs data_root in the config or ${DATA_ENV}")
    return cmapss_io.load_subset(root, cfg.subset)


def cache_key(cfg):
    ident = {
        "subset": cfg.subset,
        "seed": cfg.seed,
        "max_rul": cfg.rul.max_rul,
        "train_ratio": cfg.train_ratio,
    }
    if cfg.subset == "SYNTH":
        ident["synthetic"] = cfg.as_dict()["synthetic"]
    else:
        root = cfg.resolved_data_root()
        if not root:
            raise UsageError(f"{cfg.subset} needs data_root in the config or ${DATA_ENV}")
        ident["data"] = cmapss_io.subset_digest(root, cfg.subset)
    blob = json.dumps(ident, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _write_cache(data, cache_dir, key):
    tmp = cache_dir.with_name(cache_dir.name + ".tmp")
    shutil.rmtree(tmp, ignore_errors=True)
    tmp.mkdir(parents=True)
    for part in ("train", "val", "test"):
        ws = getattr(data, part)
        pipeline.write_windows(ws, tmp / f"windows_{part}.bin")
        feature_matrix(ws.x, data.selection.names).to_csv(tmp / f"features_{part}.csv",
                                                          f"cache_key={key}")
    meta = {
        "cache_key": key,
        "subset": data.subset_id,
        "kept_sensors": list(data.selection.kept),
        "split": {"train_ids": list(data.split.train_ids), "val_ids": list(data.split.val_ids),
                  "seed": data.split.seed},
        "scaler": data.scaler.to_dict(),
    }
    (tmp / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    shutil.rmtree(cache_dir, ignore_errors=True)
    tmp.rename(cache_dir)


def _read_cache(cache_dir):
    meta = json.loads((cache_dir / "meta.json").read_text())
    split = meta["split"]
    return PreparedData(
        subset_id=meta["subset"],
        selection=SensorSelection(tuple(meta["kept_sensors"])),
        split=EngineSplit(tuple(split["train_ids"]), tuple(split["val_ids"]), split["seed"]),
        scaler=Scaler.from_dict(meta["scaler"]),
        train=pipeline.read_windows(cache_dir / "windows_train.bin"),
        val=pipeline.read_windows(cache_dir / "windows_val.bin"),
        test=pipeline.read_windows(cache_dir / "windows_test.bin"),
    )


def cmd_prepare(cfg):
    """Preprocess (or load from cache) the configured subset."""
    key = cache_key(cfg)
    cache_dir = Path(cfg.out) / "cache" / key
    if (cache_dir / "meta.json").is_file():
        log.info("cache hit %s", cache_dir)
        return _read_cache(cache_dir)
    log.info("preparing %s (cache key %s)", cfg.subset, key)
    data = pipeline.prepare(load_bundle(cfg), cfg.rul, cfg.seed, cfg.train_ratio)
    _write_cache(data, cache_dir, key)
    return data


# -- commands -------------------------------------------------------------------


def _stem(cfg):
    return f"{cfg.subset}_{cfg.model}"


def _comment(cfg):
    return f"config_hash={cfg.config_hash()}"


def cmd_train(cfg):
    data = cmd_prepare(cfg)
    out = Path(cfg.out)
    fitted, report = experiment.fit_model(cfg.model, data, cfg.settings, log=log.info)
    path = out / experiment.model_filename(cfg.subset, cfg.model)
    experiment.save_fitted(fitted, path, {"config_hash": cfg.config_hash(), "subset": cfg.subset})
    log.info("saved %s", path)
    if report is not None:
        report.to_csv(out / f"{_stem(cfg)}_loss.csv", _comment(cfg))
        log.info("best epoch %d, stopped at %d (%.1f s)", report.best_epoch,
                 report.stopped_epoch, report.wall_time)
    return path


def _model_kind(fitted):
    if isinstance(fitted, (experiment.RidgePipeline, experiment.GbdtPipeline)):
        return fitted.name
    return fitted.kind


def cmd_evaluate(cfg, model_path=None):
    data = cmd_prepare(cfg)
    out = Path(cfg.out)
    path = Path(model_path) if model_path else out / experiment.model_filename(cfg.subset, cfg.model)
    fitted, _ = experiment.load_fitted(path)
    kind = _model_kind(fitted)
    report = experiment.evaluate_test(fitted, data)
    stem = f"{cfg.subset}_{kind}"
    payload = report.to_json(config_hash=cfg.config_hash(), subset=cfg.subset, model=kind)
    (out / f"{stem}_report.json").write_text(payload)
    analysis.export_predictions(report, out / f"{stem}_predictions.csv", _comment(cfg))
    log.info("%s %s: %s", cfg.subset, kind, report.summary())
    return report


def _trace_engine(cfg, bundle, data):
    engines = {s.engine_id: s for s in bundle.train}
    engine_id = cfg.analysis.engine_id
    if engine_id is None:
        engine_id = max(engines, key=lambda e: (len(engines[e]), -e))
    if engine_id not in engines:
        raise UsageError(f"engine {engine_id} is not in the {cfg.subset} training set")
    series = engines[engine_id]
    norm = pipeline.apply_scaler(data.scaler, series, data.selection)
    ws = pipeline.make_windows(norm, pipeline.compute_rul_labels(series, cfg.rul))
    return engine_id, ws.subset(slice(max(0, len(ws) - cfg.analysis.n_windows), None))


def cmd_analyze(cfg, checkpoint=None):
    out = Path(cfg.out)
    path = Path(checkpoint) if checkpoint else out / experiment.model_filename(cfg.subset, "lstm")
    fitted, _ = experiment.load_fitted(path)
    if not isinstance(fitted, LstmModel):
        raise UsageError(f"{path} is not an LSTM checkpoint")
    data = cmd_prepare(cfg)
    engine_id, ws = _trace_engine(cfg, load_bundle(cfg), data)
    trace = analysis.hidden_state_trace(fitted, ws)
    comment = f"{_comment(cfg)} engine_id={engine_id}"
    analysis.export_hidden(trace, out / f"{cfg.subset}_lstm_hidden.csv", comment)
    rows = analysis.sequence_ablation(fitted, data.test)
    analysis.export_ablation(rows, out / f"{cfg.subset}_lstm_ablation.csv", _comment(cfg))
    for k, v in rows:
        log.info("steps removed %2d: RMSE %.3f", k, v)
    return trace, rows


def cmd_synth(spec, out):
    bundle = cmapss_io.generate_synthetic(spec)
    paths = cmapss_io.write_bundle(bundle, out)
    for p in paths:
        log.info("wrote %s", p)
    return paths


# -- argument parsing -----------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="turborul", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", help="INI config file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config value (repeatable)")
        sp.add_argument("--subset", choices=cmapss_io.SUBSETS)
        sp.add_argument("--model", help="|".join(experiment.MODELS))
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--data-root", help=f"directory with the C-MAPSS files (default ${DATA_ENV})")

    common(sub.add_parser("prepare", help="preprocess and cache windows and features"))
    common(sub.add_parser("train", help="train the configured model"))
    ev = sub.add_parser("evaluate", help="score a trained model on the test engines")
    common(ev)
    ev.add_argument("--model-file", help="model file (default: <out>/<subset>_<model>.*)")
    an = sub.add_parser("analyze", help="LSTM hidden-state trace and sequence ablation")
    common(an)
    an.add_argument("--checkpoint", help="LSTM checkpoint (default: <out>/<subset>_lstm.ckpt)")
    sy = sub.add_parser("synth", help="write a synthetic dataset in C-MAPSS format")
    common(sy)
    return p


def config_from_args(args):
    overrides = list(args.set)
    for flag, key in (("subset", "experiment.subset"), ("model", "experiment.model"),
                      ("seed", "experiment.seed"), ("out", "experiment.out"),
                      ("data_root", "experiment.data_root")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    return load_config(args.config, overrides)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        if args.command == "prepare":
            cmd_prepare(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, args.model_file)
        elif args.command == "analyze":
            cmd_analyze(cfg, args.checkpoint)
        elif args.command == "synth":
            cmd_synth(cfg.synthetic, cfg.out)
    except UsageError as exc:
        print(f"turborul: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, StructuralError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"turborul: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, SolverError, FloatingPointError) as exc:
        print(f"turborul: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
