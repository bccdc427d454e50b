"""Shared fixtures: raw dataset files, .bre writing, tiny graphs."""

from __future__ import annotations

import json
import struct
import sys
from pathlib import Path

import numpy as np
import pytest

SRC = Path(__file__).resolve().parent.parent / "src"
if str(SRC) not in sys.path:
    try:
        import botgnn  # noqa: F401
    except ImportError:
        sys.path.insert(0, str(SRC))


def write_bre(path, data: np.ndarray) -> None:
    """Write an embedding matrix in the binary .bre layout."""
    count, dim = data.shape
    with open(path, "wb") as fh:
        fh.write(b"BRGE")
        fh.write(struct.pack("<II", count, dim))
        fh.write(np.ascontiguousarray(data, dtype="<f4").tobytes())


def write_jsonl(path, objs) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


def make_raw_files(tmp_path: Path, n: int = 8, n_edges: int = 10, seed: int = 3):
    """A small labeled dataset in the raw input formats; returns the paths."""
    rng = np.random.default_rng(seed)
    users = []
    texts = []
    for i in range(n):
        label = "bot" if i % 2 == 0 else "human"
        split = "train" if i < n - 2 else ("val" if i == n - 2 else "test")
        users.append({
            "id": f"u{i}",
            "label": label,
            "split": split,
            "followers_count": int(rng.integers(0, 500)),
            "followings_count": int(rng.integers(0, 300)),
            "favorites_count": int(rng.integers(0, 900)),
            "statuses_count": int(rng.integers(0, 2000)),
            "active_days": int(rng.integers(1, 2000)),
            "screen_name_length": int(rng.integers(4, 15)),
            "verified": bool(rng.random() < 0.5),
            "protected": bool(rng.random() < 0.2),
        })
        texts.append({"id": f"u{i}",
                      "description": f"user number {i}",
                      "tweets": [f"tweet {j} from {i}" for j in range(i % 3)]})
    pairs = set()
    while len(pairs) < n_edges:
        a, b = rng.integers(0, n, size=2)
        if a != b:
            pairs.add((int(a), int(b)))
    users_path = tmp_path / "users.jsonl"
    edges_path = tmp_path / "edges.csv"
    texts_path = tmp_path / "texts.jsonl"
    write_jsonl(users_path, users)
    with open(edges_path, "w", encoding="utf-8") as fh:
        fh.write("source,target\n")
        for a, b in sorted(pairs):
            fh.write(f"u{a},u{b}\n")
    write_jsonl(texts_path, texts)
    return users_path, edges_path, texts_path


@pytest.fixture
def raw_files(tmp_path):
    return make_raw_files(tmp_path)
