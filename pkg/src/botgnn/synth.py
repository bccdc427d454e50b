"""Seeded synthetic dataset: label signal lives only in the graph.

Two planted communities (bots, humans) of equal size. Every user follows a
fixed number of targets, each drawn from their own community with the
homophily probability; target sets are resampled until the user's following
neighborhood has a strict same-class majority, so the label is a
deterministic function of relational neighborhoods (majority vote). All node
features are drawn from class-independent distributions, leaving a
feature-only model at chance level.

Outputs use the raw ingest formats (users.jsonl / edges.csv / texts.jsonl) so
the generator doubles as an end-to-end pipeline fixture.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import CATEGORICAL_FIELDS

_VOCAB = [f"w{i}" for i in range(50)]


@dataclass
class SyntheticData:
    users: list[dict]
    edges: list[tuple[str, str]]
    texts: list[dict]

    def write(self, out_dir) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "users": out / "users.jsonl",
            "edges": out / "edges.csv",
            "texts": out / "texts.jsonl",
        }
        with open(paths["users"], "w", encoding="utf-8") as fh:
            for obj in self.users:
                fh.write(json.dumps(obj, sort_keys=True) + "\n")
        with open(paths["edges"], "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source", "target"])
            writer.writerows(self.edges)
        with open(paths["texts"], "w", encoding="utf-8") as fh:
            for obj in self.texts:
                fh.write(json.dumps(obj, sort_keys=True) + "\n")
        return paths


def _noise_profile(rng: np.random.Generator) -> dict:
    """Property values drawn identically for both classes."""
    obj = {
        "followers_count": int(rng.integers(0, 5000)),
        "followings_count": int(rng.integers(0, 3000)),
        "favorites_count": int(rng.integers(0, 20000)),
        "statuses_count": int(rng.integers(0, 50000)),
        "active_days": int(rng.integers(1, 4000)),
        "screen_name_length": int(rng.integers(4, 16)),
    }
    for name in CATEGORICAL_FIELDS:
        obj[name] = bool(rng.random() < 0.5)
    return obj


def _words(rng: np.random.Generator, low: int, high: int) -> str:
    k = int(rng.integers(low, high + 1))
    return " ".join(rng.choice(_VOCAB, size=k))


def _sample_targets(rng: np.random.Generator, me: int, own: np.ndarray,
                    other: np.ndarray, k: int, homophily: float) -> list[int]:
    """k distinct follow targets with a strict same-class majority."""
    while True:
        targets: set[int] = set()
        same = 0
        for _ in range(k):
            if rng.random() < homophily:
                pool, is_same = own, True
            else:
                pool, is_same = other, False
            t = int(pool[rng.integers(len(pool))])
            if t == me or t in targets:
                continue
            targets.add(t)
            same += is_same
        if targets and same > len(targets) - same:
            return sorted(targets)


def generate_community_data(seed: int, n_per_class: int = 100, follows: int = 10,
                            homophily: float = 0.9,
                            split_fractions: tuple[float, float] = (0.4, 0.2)) -> SyntheticData:
    rng = np.random.default_rng(seed)
    n = 2 * n_per_class
    labels = rng.permutation(np.repeat([1, 0], n_per_class))  # 1 = bot
    ids = [f"u{i:04d}" for i in range(n)]
    bots = np.flatnonzero(labels == 1)
    humans = np.flatnonzero(labels == 0)

    # per-class splits so train/val/test stay balanced
    split_of = {}
    for members in (bots, humans):
        order = rng.permutation(members)
        n_train = int(round(split_fractions[0] * len(members)))
        n_val = int(round(split_fractions[1] * len(members)))
        for i, node in enumerate(order):
            split_of[int(node)] = ("train" if i < n_train
                                   else "val" if i < n_train + n_val else "test")

    users, texts = [], []
    for i in range(n):
        obj = {"id": ids[i], "label": "bot" if labels[i] == 1 else "human",
               "split": split_of[i]}
        obj.update(_noise_profile(rng))
        users.append(obj)
        n_tweets = int(rng.integers(0, 4))
        texts.append({"id": ids[i],
                      "description": _words(rng, 5, 12),
                      "tweets": [_words(rng, 3, 10) for _ in range(n_tweets)]})

    edges = []
    for i in range(n):
        own, other = (bots, humans) if labels[i] == 1 else (humans, bots)
        for t in _sample_targets(rng, i, own, other, follows, homophily):
            edges.append((ids[i], ids[t]))
    return SyntheticData(users, edges, texts)
