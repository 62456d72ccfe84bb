"""LSTM diagnostics: hidden-state traces, the sequence-length ablation,
and per-engine prediction exports."""
from __future__ import annotations

import csv

import numpy as np

from .archs import LstmModel
from .metrics import rmse
from .pipeline import WINDOW

ABLATION_REMOVALS = (0, 5, 10, 15)


def hidden_state_trace(model, windows):
    """``h_T`` of each window (rows) for all hidden units (columns)."""
    if not isinstance(model, LstmModel):
        raise TypeError(f"hidden-state traces need an LSTM model, got {type(model).__name__}")
    x = windows.x if hasattr(windows, "x") else np.asarray(windows, dtype=np.float64)
    if len(x) == 0:
        return np.zeros((0, model.params["lstm.Wh"].shape[0]))
    return model.final_hidden(x)


def mask_oldest(x, k):
    """Zero the ``k`` oldest steps of every window (window length unchanged)."""
    if not 0 <= k < WINDOW:
        raise ValueError(f"steps removed must lie in [0, {WINDOW}), got {k}")
    out = np.array(x, dtype=np.float64, copy=True)
    out[:, :k, :] = 0.0
    return out


def sequence_ablation(model, test_windows, removals=ABLATION_REMOVALS):
    """RMSE against the window labels after blanking the oldest k steps."""
    if not isinstance(model, LstmModel):
        raise TypeError("sequence ablation needs an LSTM model")
    rows = []
    for k in removals:
        pred = model.predict(mask_oldest(test_windows.x, k))
        rows.append((int(k), rmse(pred, test_windows.y)))
    return rows


def _write_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def export_predictions(report, path, comment=None):
    """CSV ``engine_id, y_true, y_pred, h`` ordered by engine id."""
    rows = sorted(report.rows(), key=lambda r: r[0])
    _write_csv(path, ["engine_id", "y_true", "y_pred", "h"], rows, comment)


def read_predictions(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    next(reader)
    return [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in reader]


def export_hidden(trace, path, comment=None):
    header = ["window"] + [f"h{j}" for j in range(trace.shape[1])]
    _write_csv(path, header, [[i, *map(float, row)] for i, row in enumerate(trace)], comment)


def export_ablation(rows, path, comment=None):
    _write_csv(path, ["steps_removed", "rmse"], [(k, float(v)) for k, v in rows], comment)
