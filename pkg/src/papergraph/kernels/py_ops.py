"""Numpy implementations of the segment kernels.

These are the fallback backend for the attention hot loop: softmax over
contiguous edge segments (edges sorted by destination node), segment sums,
and scatter-add. Segments are never empty because every node carries a
self-loop. All functions preserve the input float dtype.
"""

from __future__ import annotations

import numpy as np


def _segment_of(starts: np.ndarray) -> np.ndarray:
    counts = np.diff(starts)
    return np.repeat(np.arange(len(counts)), counts)


def seg_softmax(e: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Softmax of e (E, H) within each segment [starts[v], starts[v+1])."""
    seg = _segment_of(starts)
    peak = np.maximum.reduceat(e, starts[:-1], axis=0)
    shifted = np.exp(e - peak[seg])
    denom = np.add.reduceat(shifted, starts[:-1], axis=0)
    return shifted / denom[seg]


def seg_softmax_grad(alpha: np.ndarray, g_alpha: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Backward of seg_softmax: alpha * (g - sum_segment(alpha * g))."""
    seg = _segment_of(starts)
    dot = np.add.reduceat(alpha * g_alpha, starts[:-1], axis=0)
    return alpha * (g_alpha - dot[seg])


def seg_sum(x: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Sum rows of x (E, D) within each segment; returns (V, D)."""
    return np.add.reduceat(x, starts[:-1], axis=0)


def scatter_add(src: np.ndarray, idx: np.ndarray, n_rows: int) -> np.ndarray:
    """out[idx[e]] += src[e] over rows; returns out of shape (n_rows, D)."""
    out = np.zeros((n_rows,) + src.shape[1:], dtype=src.dtype)
    np.add.at(out, idx, src)
    return out
