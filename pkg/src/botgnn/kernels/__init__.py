"""CSR aggregation kernels with backend selection at import time.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is missing or when ``BOTGNN_PURE_PYTHON=1`` is set. Both
backends implement the same two primitives:

* ``mean_gather(offsets, indices, inv_count, src)`` -- row i of the result is
  ``inv_count[i] * sum(src[j] for j in indices[offsets[i]:offsets[i+1]])``.
  Summing before scaling keeps the row exact (hence neighbor-order free) for
  integer-valued inputs.
* ``weighted_gather(offsets, indices, weights, src)`` -- row i is the
  per-edge-weighted sum of the gathered rows.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

_FORCE_FALLBACK = os.environ.get("BOTGNN_PURE_PYTHON", "") not in ("", "0")

if _FORCE_FALLBACK:
    _impl = _fallback
    BACKEND = "numpy"
else:
    try:
        from . import _csr as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "numpy"


def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _as_i64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def mean_gather(offsets, indices, inv_count, src, impl=None):
    src = _as_f64(src)
    out = np.zeros((offsets.shape[0] - 1, src.shape[1]), dtype=np.float64)
    (impl or _impl).mean_gather(_as_i64(offsets), _as_i64(indices), _as_f64(inv_count), src, out)
    return out


def weighted_gather(offsets, indices, weights, src, impl=None):
    src = _as_f64(src)
    out = np.zeros((offsets.shape[0] - 1, src.shape[1]), dtype=np.float64)
    (impl or _impl).weighted_gather(_as_i64(offsets), _as_i64(indices), _as_f64(weights), src, out)
    return out


def available_backends() -> dict:
    """Map backend name -> implementation module, for benchmarks and tests."""
    impls = {"numpy": _fallback}
    try:
        from . import _csr  # noqa: F401

        impls["cython"] = _csr
    except ImportError:
        pass
    return impls
