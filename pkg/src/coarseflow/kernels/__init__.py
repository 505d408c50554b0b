"""Hot numeric kernels: a compiled (Cython) core and a numpy implementation,
selected once at import time.

Set ``COARSEFLOW_KERNELS`` to ``compiled`` or ``python`` to force a backend;
``auto`` (default) uses the numpy path, which benchmarks faster on BLAS-backed
hosts (see benchmarks/bench_kernels.py), and falls back transparently when the
extension is not built. Both backends are single-threaded-deterministic and
agree to float rounding; `tests/test_kernels.py` enforces the equivalence.
"""

from __future__ import annotations

import importlib
import os

import numpy as np

from . import _reference

try:
    _core = importlib.import_module("._core", __name__)
except ImportError:
    _core = None

HAVE_COMPILED = _core is not None

_requested = os.environ.get("COARSEFLOW_KERNELS", "auto").lower()
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(f"COARSEFLOW_KERNELS={_requested!r}; expected auto, compiled or python")
if _requested == "compiled" and not HAVE_COMPILED:
    raise ImportError(
        "COARSEFLOW_KERNELS=compiled but the extension is not built; "
        "run `python setup.py build_ext --inplace`"
    )

BACKEND = "compiled" if _requested == "compiled" else "python"
_impl = _core if BACKEND == "compiled" else _reference


def _prep(a: np.ndarray, b: np.ndarray):
    dtype = np.result_type(a.dtype, b.dtype)
    if dtype not in (np.float32, np.float64):
        dtype = np.float64
    return (
        np.ascontiguousarray(a, dtype=dtype),
        np.ascontiguousarray(b, dtype=dtype),
    )


def conv3x3_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    x, w = _prep(x, w)
    return _impl.conv3x3_forward(x, w)


def conv3x3_grad_weight(x: np.ndarray, gy: np.ndarray) -> np.ndarray:
    x, gy = _prep(x, gy)
    return _impl.conv3x3_grad_weight(x, gy)


def conv3x3_grad_input(gy: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Input gradient: a 3x3 convolution with the spatially flipped, in/out
    swapped kernel. Shared across backends."""
    wt = np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    return conv3x3_forward(gy, wt)
