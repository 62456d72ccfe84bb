"""Backend selection for the boosted-tree hot loops.

The compiled extension is used when it was built; otherwise (or when the
environment variable ``TURBORUL_PURE_PYTHON`` is set to a non-empty value
other than ``0``) the numpy fallback is used. Both produce identical bits.
"""
import os

from . import _gbdt_fallback as python_backend

try:
    from . import _gbdt_core as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

_force_python = os.environ.get("TURBORUL_PURE_PYTHON", "") not in ("", "0")

if compiled_backend is not None and not _force_python:
    backend = compiled_backend
    BACKEND = "cython"
else:
    backend = python_backend
    BACKEND = "python"

scan_level = backend.scan_level
predict_tree = backend.predict_tree
