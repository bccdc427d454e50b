"""Numpy implementations of the CSR aggregation kernels.

Used when the compiled extension is unavailable or when
``BOTGNN_PURE_PYTHON=1`` forces it. Segment sums go through
``np.add.reduceat`` restricted to nonempty segments (reduceat returns
``a[start]`` for empty ones, which would be wrong).
"""

from __future__ import annotations

import numpy as np


def _segment_sum(values: np.ndarray, offsets: np.ndarray, out: np.ndarray) -> np.ndarray:
    counts = np.diff(offsets)
    nonempty = counts > 0
    if values.shape[0] and nonempty.any():
        out[nonempty] = np.add.reduceat(values, offsets[:-1][nonempty], axis=0)
    return out


def mean_gather(offsets, indices, inv_count, src, out):
    _segment_sum(src[indices], offsets, out)
    out *= inv_count[:, None]


def weighted_gather(offsets, indices, weights, src, out):
    _segment_sum(weights[:, None] * src[indices], offsets, out)
