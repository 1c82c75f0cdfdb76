"""Segment-kernel backend selection.

The compiled Cython extension is preferred when present; otherwise the
numpy fallback is used. Set PAPERGRAPH_NO_EXT=1 to force the fallback.
Both backends implement the same four operations; results agree to float
rounding (summation order may differ), and each backend is deterministic.
"""

from __future__ import annotations

import os

import numpy as np

from . import py_ops

if os.environ.get("PAPERGRAPH_NO_EXT"):
    _impl = py_ops
    BACKEND = "fallback"
else:
    try:
        from . import _gatops as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = py_ops
        BACKEND = "fallback"

__all__ = ["BACKEND", "seg_softmax", "seg_softmax_grad", "seg_sum", "scatter_add"]


def _as_c2d(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x)


def seg_softmax(e: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return _impl.seg_softmax(_as_c2d(e), np.ascontiguousarray(starts, dtype=np.int64))


def seg_softmax_grad(alpha: np.ndarray, g_alpha: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return _impl.seg_softmax_grad(
        _as_c2d(alpha), _as_c2d(g_alpha), np.ascontiguousarray(starts, dtype=np.int64)
    )


def seg_sum(x: np.ndarray, starts: np.ndarray) -> np.ndarray:
    return _impl.seg_sum(_as_c2d(x), np.ascontiguousarray(starts, dtype=np.int64))


def scatter_add(src: np.ndarray, idx: np.ndarray, n_rows: int) -> np.ndarray:
    return _impl.scatter_add(
        _as_c2d(src), np.ascontiguousarray(idx, dtype=np.int64), int(n_rows)
    )
