import os
import sys

import numpy as np
import pytest

from turborul import cmapss_io, pipeline

DATA_ROOT = os.environ.get("TURBORUL_DATA")


def real_subset(subset):
    """Skip unless the real C-MAPSS files for ``subset`` are available."""
    if not cmapss_io.subset_available(DATA_ROOT, subset):
        pytest.skip(f"{subset} files not found (set TURBORUL_DATA)")
    return cmapss_io.load_subset(DATA_ROOT, subset)


@pytest.fixture(scope="session")
def synth_bundle():
    return cmapss_io.generate_synthetic(cmapss_io.SyntheticSpec(n_engines=20, seed=3))


@pytest.fixture(scope="session")
def prepared(synth_bundle):
    return pipeline.prepare(synth_bundle)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def series_text(engine_id, n_cycles, start=0.0):
    """C-MAPSS rows for one engine with easily recognisable values."""
    lines = []
    for c in range(1, n_cycles + 1):
        vals = [start + c + 0.01 * j for j in range(24)]
        lines.append(" ".join([str(engine_id), str(c)] + [repr(v) for v in vals]))
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def trained_lstm(prepared):
    from turborul import archs

    cfg = archs.TrainConfig(max_epochs=4, seed=42)
    model, report = archs.train(archs.build_lstm(prepared.train.n_sensors, 42),
                                prepared.train, prepared.val, cfg)
    return model, report


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
