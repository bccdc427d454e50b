"""Benchmark of the CSR aggregation kernels: compiled extension vs numpy.

Builds one random fixed-degree adjacency and times both backends on the two
primitives that dominate message-passing epochs, also reporting the max
absolute disagreement between backends.
"""

from __future__ import annotations

import time

import numpy as np

from . import kernels


def _random_csr(rng: np.random.Generator, nodes: int, degree: int):
    indices = rng.integers(0, nodes, size=nodes * degree, dtype=np.int64)
    offsets = np.arange(0, nodes * degree + 1, degree, dtype=np.int64)
    return offsets, indices


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(nodes: int = 20000, degree: int = 20, dim: int = 128,
                  repeats: int = 5, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    offsets, indices = _random_csr(rng, nodes, degree)
    inv = np.full(nodes, 1.0 / degree)
    weights = rng.uniform(0.5, 1.5, size=indices.shape[0])
    h = rng.normal(size=(nodes, dim))

    impls = kernels.available_backends()
    timings: dict[str, dict[str, float]] = {}
    outputs: dict[str, np.ndarray] = {}
    for name, impl in impls.items():
        timings[name] = {
            "mean_gather": _best_time(
                lambda: kernels.mean_gather(offsets, indices, inv, h, impl=impl), repeats),
            "weighted_gather": _best_time(
                lambda: kernels.weighted_gather(offsets, indices, weights, h, impl=impl), repeats),
        }
        outputs[name] = kernels.mean_gather(offsets, indices, inv, h, impl=impl)

    max_diff = 0.0
    names = list(outputs)
    for a in range(len(names)):
        for b in range(a + 1, len(names)):
            max_diff = max(max_diff, float(np.abs(outputs[names[a]] - outputs[names[b]]).max()))

    return {
        "nodes": nodes, "degree": degree, "dim": dim, "repeats": repeats,
        "active_backend": kernels.BACKEND,
        "timings_s": timings,
        "max_backend_diff": max_diff,
    }


def format_report(results: dict) -> str:
    lines = [
        f"nodes={results['nodes']} degree={results['degree']} dim={results['dim']} "
        f"repeats={results['repeats']} (best-of)",
        f"active backend: {results['active_backend']}",
        f"{'backend':<10} {'mean_gather':>14} {'weighted_gather':>17}",
    ]
    for name, t in results["timings_s"].items():
        lines.append(f"{name:<10} {t['mean_gather'] * 1e3:>12.2f}ms {t['weighted_gather'] * 1e3:>15.2f}ms")
    t = results["timings_s"]
    if "cython" in t and "numpy" in t:
        for op in ("mean_gather", "weighted_gather"):
            speedup = t["numpy"][op] / t["cython"][op]
            lines.append(f"speedup ({op}): {speedup:.2f}x")
    lines.append(f"max cross-backend difference: {results['max_backend_diff']:.3e}")
    return "\n".join(lines)
