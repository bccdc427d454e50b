"""texts.jsonl reading, .bre writing and the corpus embedding driver.

The `.bre` layout (shared with the main package): magic ``BRGE``, u32 LE
row count, u32 LE dim, then count*dim float32 LE row-major values, one row
per user in dataset node order. Files are written atomically (temp file in
the target directory, then rename).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import HfEncoder

EMBEDDING_MAGIC = b"BRGE"


class CorpusError(Exception):
    """Malformed texts file or mismatch against the dataset's user order."""


@dataclass
class TextBatch:
    user_id: str
    description: str
    tweets: list[str]


def read_texts(path) -> list[TextBatch]:
    """Parse texts.jsonl in file order: {"id", "description", "tweets"}."""
    batches: list[TextBatch] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON ({exc.msg})") from exc
            uid = obj.get("id")
            if not isinstance(uid, str) or not uid:
                raise CorpusError(f"{where}: missing or invalid 'id'")
            if uid in seen:
                raise CorpusError(f"{where}: duplicate user id {uid!r}")
            seen.add(uid)
            tweets = obj.get("tweets", [])
            if not isinstance(tweets, list) or any(not isinstance(t, str) for t in tweets):
                raise CorpusError(f"{where}: 'tweets' must be a list of strings")
            batches.append(TextBatch(uid, str(obj.get("description", "")), tweets))
    return batches


def read_user_order(users_path) -> list[str]:
    """The dataset node order is the 'id' sequence of users.jsonl."""
    ids: list[str] = []
    with open(users_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{users_path}:{lineno}: malformed JSON ({exc.msg})") from exc
            uid = obj.get("id")
            if not isinstance(uid, str) or not uid:
                raise CorpusError(f"{users_path}:{lineno}: missing or invalid 'id'")
            ids.append(uid)
    return ids


def write_bre(path, data: np.ndarray) -> None:
    """Atomic .bre write: temp file in the same directory, then rename."""
    data = np.ascontiguousarray(data, dtype="<f4")
    count, dim = data.shape
    target = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=target.parent or ".", suffix=".bre.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(EMBEDDING_MAGIC)
            fh.write(struct.pack("<II", count, dim))
            fh.write(data.tobytes())
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def _check_order(batches: list[TextBatch], users_path, expected_count) -> None:
    if users_path is not None:
        order = read_user_order(users_path)
        if len(order) != len(batches):
            raise CorpusError(f"user count mismatch: texts has {len(batches)} users, "
                              f"dataset has {len(order)}")
        for i, (batch, uid) in enumerate(zip(batches, order)):
            if batch.user_id != uid:
                raise CorpusError(f"user order mismatch at row {i}: texts has "
                                  f"{batch.user_id!r}, dataset has {uid!r}")
    if expected_count is not None and len(batches) != expected_count:
        raise CorpusError(f"user count mismatch: texts has {len(batches)} users, "
                          f"expected {expected_count}")


def embed_corpus(texts_path, model_name_or_path: str, out_path, mode: str,
                 users_path=None, expected_count: int | None = None,
                 batch_size: int = 16, max_length: int | None = None) -> dict:
    """Encode a corpus into a .bre file; returns the run manifest dict.

    description mode: one pooled vector per user. tweets mode: the mean of
    per-tweet pooled vectors, a zero row for tweetless users.
    """
    if mode not in ("description", "tweets"):
        raise CorpusError(f"mode must be 'description' or 'tweets', got {mode!r}")
    batches = read_texts(texts_path)
    _check_order(batches, users_path, expected_count)
    encoder = HfEncoder(model_name_or_path, max_length=max_length)

    if mode == "description":
        matrix = encoder.encode([b.description for b in batches], batch_size=batch_size)
    else:
        owners: list[int] = []
        flat: list[str] = []
        for i, b in enumerate(batches):
            owners.extend([i] * len(b.tweets))
            flat.extend(b.tweets)
        matrix = np.zeros((len(batches), encoder.hidden_size), dtype=np.float32)
        if flat:
            vectors = encoder.encode(flat, batch_size=batch_size)
            counts = np.bincount(owners, minlength=len(batches)).astype(np.float32)
            np.add.at(matrix, np.asarray(owners), vectors)
            nonzero = counts > 0
            matrix[nonzero] /= counts[nonzero, None]

    write_bre(out_path, matrix)
    manifest = {
        "mode": mode,
        "model": str(model_name_or_path),
        "texts": str(texts_path),
        "output": str(out_path),
        "users": len(batches),
        "dim": encoder.hidden_size,
        "max_length": encoder.max_length,
        "texts_truncated": encoder.truncated,
        "batch_size": batch_size,
    }
    manifest_path = f"{out_path}.manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest
