import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from turborul import gbdt, kernels
from turborul.errors import StructuralError

import oracles

BACKENDS = [kernels.python_backend] + ([kernels.compiled_backend] if kernels.compiled_backend else [])
backend_ids = [b.__name__.rsplit(".", 1)[-1] for b in BACKENDS]


def _cfg(**kw):
    base = dict(n_estimators=60, max_depth=3, seed=1)
    base.update(kw)
    return gbdt.GbdtConfig(**base)


@pytest.fixture(scope="module")
def regression_data():
    r = np.random.default_rng(0)
    x = r.normal(size=(400, 6))
    y = 3 * x[:, 0] - 2 * (x[:, 1] > 0.3) + x[:, 2] * x[:, 3] + 0.1 * r.normal(size=400)
    return x[:300], y[:300], x[300:], y[300:]


@pytest.mark.parametrize("backend", BACKENDS, ids=backend_ids)
def test_split_example_from_gradients(backend):
    x = np.array([[0.0], [1.0], [10.0], [11.0]])
    s = gbdt.find_best_split(x, range(4), [-1, -1, 1, 1], np.ones(4), [0], lam=0.0,
                             min_child_weight=0.0, backend=backend)
    assert (s.feature, s.threshold) == (0, 5.5)
    assert s.gain == pytest.approx(2.0)


@pytest.mark.parametrize("backend", BACKENDS, ids=backend_ids)
def test_identical_values_give_no_split(backend):
    x = np.full((5, 2), 3.0)
    assert gbdt.find_best_split(x, range(5), [1, -1, 2, -2, 0], np.ones(5), [0, 1],
                                backend=backend) is None


@pytest.mark.parametrize("backend", BACKENDS, ids=backend_ids)
def test_tie_goes_to_lowest_feature(backend):
    col = np.array([0.0, 1.0, 2.0, 3.0])
    x = np.stack([col, col, col], axis=1)
    s = gbdt.find_best_split(x, range(4), [-1, -1, 1, 1], np.ones(4), [2, 1], lam=0.0,
                             min_child_weight=0.0, backend=backend)
    assert s.feature == 1


@pytest.mark.parametrize("backend", BACKENDS, ids=backend_ids)
def test_min_child_weight_blocks_split(backend):
    x = np.array([[0.0], [1.0]])
    assert gbdt.find_best_split(x, [0, 1], [-1, 1], np.ones(2), [0], min_child_weight=2.0,
                                backend=backend) is None


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_split_matches_exhaustive_oracle(seed):
    r = np.random.default_rng(seed)
    n, d = int(r.integers(2, 51)), int(r.integers(1, 4))
    x = r.integers(0, 6, size=(n, d)).astype(float)  # many duplicate values
    g = r.integers(-3, 4, size=n).astype(float)      # integer sums are exact: real ties
    h = r.integers(1, 3, size=n).astype(float)
    lam, mcw = float(r.choice([0.0, 1.0])), float(r.choice([0.0, 1.0, 3.0]))
    expected = oracles.best_split(x, g, h, lam, mcw)
    for backend in BACKENDS:
        got = gbdt.find_best_split(x, range(n), g, h, range(d), lam, mcw, backend=backend)
        assert (got is None) == (expected is None)
        if got is not None:
            assert (got.feature, got.threshold, got.gain) == expected


def test_split_on_row_subset():
    x = np.array([[0.0], [5.0], [1.0], [10.0], [11.0]])
    g = np.array([-1.0, 100.0, -1.0, 1.0, 1.0])
    s = gbdt.find_best_split(x, [0, 2, 3, 4], g, np.ones(5), [0], lam=0.0, min_child_weight=0.0)
    assert s.threshold == 5.5


def test_constant_target_predicts_constant():
    x = np.random.default_rng(1).normal(size=(50, 3))
    m = gbdt.fit_gbdt(x, np.full(50, 7.0), x[:10], np.full(10, 7.0), _cfg(n_estimators=5))
    assert m.base_score == 7.0
    assert all(len(t) == 1 and t.value[0] == 0.0 for t in m.trees)
    np.testing.assert_array_equal(gbdt.predict(m, x), 7.0)


def test_step_function_single_stump():
    x = np.array([[-3.0], [-2.0], [-1.0], [1.0], [2.0], [4.0]])
    y = np.array([1.0, 1.0, 1.0, 5.0, 5.0, 5.0])
    cfg = gbdt.GbdtConfig(n_estimators=1, max_depth=1, learning_rate=1.0, subsample=1.0,
                          colsample_bytree=1.0, lambda_l2=0.0, min_child_weight=0.0)
    m = gbdt.fit_gbdt(x, y, x, y, cfg)
    tree = m.trees[0]
    assert len(tree) == 3 and tree.threshold[0] == 0.0  # midpoint of the -1 | 1 gap
    expected = oracles.best_split(x, m.base_score - y, np.ones(6), 0.0, 0.0)
    assert expected[:2] == (0, 0.0)
    np.testing.assert_allclose(gbdt.predict(m, x), y, atol=1e-12)


def test_training_rmse_non_increasing_without_sampling(regression_data):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg(subsample=1.0, colsample_bytree=1.0,
                                          early_stopping_patience=1000))
    hist = np.array(m.train_history)
    assert np.all(np.diff(hist) <= 1e-12)


def test_leaf_weights_bounded(regression_data):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg(n_estimators=1))
    leaves = m.trees[0].leaf_values()
    assert np.all(np.isfinite(leaves))
    assert np.abs(leaves).max() <= np.abs(y - m.base_score).max()


def test_depth_limit(regression_data):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg(max_depth=2, n_estimators=10))
    assert max(t.depth() for t in m.trees) <= 2


def test_early_stopping_picks_minimum(regression_data):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg(n_estimators=400, learning_rate=0.5,
                                          early_stopping_patience=5))
    hist = m.val_history
    assert len(hist) < 400
    assert hist[m.best_round] == min(hist)
    assert len(hist) == m.best_round + 1 + 5


def test_prediction_uses_trees_up_to_best_round(regression_data):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg(n_estimators=30))
    m.best_round = 4
    manual = m.base_score + sum(m.learning_rate * t.predict(xv) for t in m.trees[:5])
    np.testing.assert_allclose(gbdt.predict(m, xv), manual, rtol=0, atol=1e-12)


def test_empty_and_single_leaf_models():
    x = np.zeros((3, 2))
    empty = gbdt.GbdtModel(4.0, [], -1, 0.05, 2)
    np.testing.assert_array_equal(gbdt.predict(empty, x), 4.0)
    leaf = gbdt.Tree([-1], [0.0], [-1], [-1], [10.0])
    one = gbdt.GbdtModel(4.0, [leaf], 0, 0.05, 2)
    np.testing.assert_allclose(gbdt.predict(one, x), 4.0 + 0.05 * 10.0)


def test_width_mismatch(regression_data):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg(n_estimators=2))
    with pytest.raises(StructuralError):
        gbdt.predict(m, x[:, :3])


@pytest.mark.parametrize("kind", ["empty", "empty_val", "nan_target"])
def test_fit_errors(kind):
    x = np.ones((4, 2))
    y = np.arange(4.0)
    if kind == "empty":
        args = (x[:0], y[:0], x, y)
    elif kind == "empty_val":
        args = (x, y, x[:0], y[:0])
    else:
        args = (x, np.array([1.0, np.nan, 2.0, 3.0]), x, y)
    with pytest.raises(ValueError):
        gbdt.fit_gbdt(*args, _cfg(n_estimators=2))


def test_determinism_and_json_round_trip(regression_data):
    x, y, xv, yv = regression_data
    a = gbdt.fit_gbdt(x, y, xv, yv, _cfg())
    b = gbdt.fit_gbdt(x, y, xv, yv, _cfg())
    assert a.to_json() == b.to_json()
    back = gbdt.GbdtModel.from_json(a.to_json())
    np.testing.assert_array_equal(gbdt.predict(back, xv), gbdt.predict(a, xv))
    rec = a.trees[0].to_records()[0]
    assert set(rec) == {"id", "feature", "threshold", "left", "right"}


def test_seed_changes_model(regression_data):
    x, y, xv, yv = regression_data
    assert gbdt.fit_gbdt(x, y, xv, yv, _cfg(seed=1)).to_json() != \
        gbdt.fit_gbdt(x, y, xv, yv, _cfg(seed=2)).to_json()


@pytest.mark.skipif(kernels.compiled_backend is None, reason="extension not built")
def test_backends_build_identical_models(regression_data):
    x, y, xv, yv = regression_data
    cfg = _cfg(max_depth=6)
    a = gbdt.fit_gbdt(x, y, xv, yv, cfg, backend=kernels.python_backend)
    b = gbdt.fit_gbdt(x, y, xv, yv, cfg, backend=kernels.compiled_backend)
    assert a.to_json() == b.to_json()


@pytest.mark.skipif(kernels.compiled_backend is None, reason="extension not built")
def test_backends_predict_identically(regression_data, rng):
    x, y, xv, yv = regression_data
    m = gbdt.fit_gbdt(x, y, xv, yv, _cfg())
    probe = rng.normal(size=(500, 6))
    a = gbdt.predict(m, probe, backend=kernels.python_backend)
    b = gbdt.predict(m, probe, backend=kernels.compiled_backend)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("kwargs", [{"learning_rate": 0.0}, {"subsample": 1.5},
                                    {"max_depth": 0}, {"lambda_l2": -1.0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        gbdt.GbdtConfig(**kwargs)


def test_backend_selection_env(monkeypatch):
    import importlib
    monkeypatch.setenv("TURBORUL_PURE_PYTHON", "1")
    k = importlib.reload(kernels)
    try:
        assert k.BACKEND == "python" and k.backend is k.python_backend
    finally:
        monkeypatch.delenv("TURBORUL_PURE_PYTHON")
        importlib.reload(kernels)
