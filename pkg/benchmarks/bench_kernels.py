"""Time the compiled boosted-tree kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--engines 100] [--trees 30] [--repeat 3]

Both backends fit the same model on engineered features of a synthetic
FD001-sized dataset; the script also checks that the fitted trees and the
predictions are identical.
"""
import argparse
import statistics
import sys
import time

import numpy as np

from turborul import _gbdt_fallback, cmapss_io, gbdt, kernels, pipeline
from turborul.features import engineer_features


def best_of(fn, repeat):
    times, result = [], None
    for _ in range(repeat):
        start = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - start)
    return min(times), statistics.median(times), result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--engines", type=int, default=100)
    ap.add_argument("--trees", type=int, default=30)
    ap.add_argument("--depth", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if kernels.compiled_backend is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1

    data = pipeline.prepare(cmapss_io.generate_synthetic(
        cmapss_io.SyntheticSpec(n_engines=args.engines, seed=1)))
    x, y = engineer_features(data.train.x), data.train.y
    xv, yv = engineer_features(data.val.x), data.val.y
    cfg = gbdt.GbdtConfig(n_estimators=args.trees, max_depth=args.depth,
                          early_stopping_patience=args.trees + 1)
    print(f"train {x.shape[0]} rows x {x.shape[1]} features, {args.trees} trees, depth {args.depth}")

    backends = {"cython": kernels.compiled_backend, "python": _gbdt_fallback}
    fits, preds = {}, {}
    print(f"{'backend':<8} {'fit best':>10} {'fit median':>11} {'predict best':>13}")
    for name, be in backends.items():
        fb, fm, model = best_of(lambda: gbdt.fit_gbdt(x, y, xv, yv, cfg, backend=be), args.repeat)
        pb, _, pred = best_of(lambda: gbdt.predict(model, x, backend=be), args.repeat)
        fits[name], preds[name] = (fb, model), (pb, pred)
        print(f"{name:<8} {fb:>9.3f}s {fm:>10.3f}s {pb:>12.4f}s")

    speed_fit = fits["python"][0] / fits["cython"][0]
    speed_pred = preds["python"][0] / preds["cython"][0]
    same = (fits["python"][1].to_dict() == fits["cython"][1].to_dict()
            and np.array_equal(preds["python"][1], preds["cython"][1]))
    print(f"speedup: fit {speed_fit:.1f}x, predict {speed_pred:.1f}x; identical output: {same}")
    return 0 if same else 2


if __name__ == "__main__":
    sys.exit(main())
