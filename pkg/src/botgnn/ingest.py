"""Dataset ingestion: user records, edges, embeddings, encodings, bundles.

Input formats
-------------
``users.jsonl``
    One JSON object per line. Recognized keys: ``id`` (string), the six
    numerical property names (``followers_count``, ``followings_count``,
    ``favorites_count``, ``statuses_count``, ``active_days``,
    ``screen_name_length``), the eleven categorical property names as
    booleans, optional ``label`` in {"human", "bot"} and optional ``split``
    in {"train", "val", "test"}. Unknown keys are errors. Missing values
    stay absent; they are never defaulted.

``edges.csv``
    Header ``source,target`` or ``source,target,relation`` with relation in
    {"following", "follower"}. A tagged row gives the direction of the
    underlying follow edge (``following``: source follows target;
    ``follower``: target follows source); untagged rows mean source follows
    target. Every follow edge u->v materializes as v in u's "following"
    neighborhood and u in v's "follower" neighborhood.

``.bre`` embedding files
    Magic ``BRGE``, u32 LE row count, u32 LE dim, then count*dim float32 LE
    row-major values, one row per user in dataset node order.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError

NUMERICAL_FIELDS = (
    "followers_count",
    "followings_count",
    "favorites_count",
    "statuses_count",
    "active_days",
    "screen_name_length",
)
# all counts except active_days must be nonnegative integers
_INTEGER_NUMERICAL = frozenset(NUMERICAL_FIELDS) - {"active_days"}

CATEGORICAL_FIELDS = (
    "protected",
    "geo_enabled",
    "verified",
    "contributors_enabled",
    "is_translator",
    "is_translation_enabled",
    "profile_background_tile",
    "profile_user_background_image",
    "has_extended_profile",
    "default_profile",
    "default_profile_image",
)

RELATIONS = ("following", "follower")
SPLITS = ("train", "val", "test")
LABELS = {"human": 0, "bot": 1}

EMBEDDING_MAGIC = b"BRGE"
ZERO_VARIANCE_EPS = 1e-8

_ALLOWED_USER_KEYS = frozenset(("id", "label", "split") + NUMERICAL_FIELDS + CATEGORICAL_FIELDS)


@dataclass
class UserRecord:
    """One user's raw properties; None marks an absent value."""

    user_id: str
    numerical: list[float | None]
    categorical: list[bool | None]
    label: int | None = None
    split: str = "unlabeled"


@dataclass
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        n = len(self.train)
        if not (len(self.val) == len(self.test) == n):
            raise DataError("split masks must share one length")
        overlap = (self.train & self.val) | (self.train & self.test) | (self.val & self.test)
        if overlap.any():
            raise DataError("split masks overlap")


@dataclass
class NumericStats:
    """Train-split mean/std (population, 1/n) per numerical column."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        if self.mean.shape != (6,) or self.std.shape != (6,):
            raise DataError("numeric stats must cover exactly the 6 numerical columns")
        if (self.std < 0).any():
            raise DataError("negative standard deviation")


@dataclass
class EmbeddingMatrix:
    count: int
    dim: int
    data: np.ndarray  # (count, dim) float64

    def __post_init__(self):
        if self.dim <= 0:
            raise DataError("embedding dim must be positive")
        if self.data.shape != (self.count, self.dim):
            raise DataError("embedding matrix shape mismatch")
        if not np.isfinite(self.data).all():
            raise DataError("embedding matrix contains non-finite values")


class HeteroGraph:
    """Node set plus one sorted CSR adjacency per relation (following, follower)."""

    def __init__(self, n_nodes: int, offsets: Sequence[np.ndarray], indices: Sequence[np.ndarray]):
        if len(offsets) != len(RELATIONS) or len(indices) != len(RELATIONS):
            raise DataError(f"exactly {len(RELATIONS)} relations required")
        self.n_nodes = int(n_nodes)
        self.offsets = tuple(np.asarray(o, dtype=np.int64) for o in offsets)
        self.indices = tuple(np.asarray(ix, dtype=np.int64) for ix in indices)
        for off, idx in zip(self.offsets, self.indices):
            if off.shape != (self.n_nodes + 1,) or off[0] != 0 or off[-1] != idx.shape[0]:
                raise DataError("malformed CSR offsets")
            if (np.diff(off) < 0).any():
                raise DataError("CSR offsets must be nondecreasing")
            if idx.size and (idx.min() < 0 or idx.max() >= self.n_nodes):
                raise DataError("neighbor index out of range")
        self._cache: dict = {}

    def neighbors(self, relation: int, node: int) -> np.ndarray:
        off = self.offsets[relation]
        return self.indices[relation][off[node] : off[node + 1]]

    def degrees(self, relation: int) -> np.ndarray:
        return np.diff(self.offsets[relation])

    @property
    def n_edges(self) -> int:
        return int(self.indices[0].shape[0])


@dataclass
class FeatureBundle:
    """The four raw per-user feature blocks feeding the modality encoders."""

    desc: np.ndarray         # (n, d_desc)
    tweets: np.ndarray       # (n, d_tweets)
    numerical: np.ndarray    # (n, 6), z-scored
    categorical: np.ndarray  # (n, 22), one-hot pairs

    def __post_init__(self):
        n = self.desc.shape[0]
        if not (self.tweets.shape[0] == self.numerical.shape[0] == self.categorical.shape[0] == n):
            raise DataError("feature blocks disagree on user count")
        if self.numerical.shape[1] != 6 or self.categorical.shape[1] != 22:
            raise DataError("numerical/categorical blocks have fixed widths 6 and 22")

    @property
    def n_users(self) -> int:
        return self.desc.shape[0]

    def block(self, name: str) -> np.ndarray:
        return {"desc": self.desc, "tweets": self.tweets,
                "num": self.numerical, "cat": self.categorical}[name]


@dataclass
class Dataset:
    """Everything a training run needs, as produced by `prepare`."""

    ids: list[str]
    features: FeatureBundle
    labels: np.ndarray  # (n,) int64; -1 = unlabeled
    masks: SplitMasks
    graph: HeteroGraph
    num_stats: NumericStats

    @property
    def n_nodes(self) -> int:
        return len(self.ids)


# ---------------------------------------------------------------------------
# users.jsonl


def _parse_numeric(name: str, value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DataError(f"{where}: field '{name}' must be a number, got {value!r}")
    v = float(value)
    if not np.isfinite(v):
        raise DataError(f"{where}: field '{name}' is not finite")
    if v < 0:
        raise DataError(f"{where}: field '{name}' must be nonnegative")
    if name in _INTEGER_NUMERICAL and v != int(v):
        raise DataError(f"{where}: field '{name}' must be an integer count")
    return v


def parse_users(path) -> list[UserRecord]:
    """Read users.jsonl in file order, preserving absent fields as None."""
    records: list[UserRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            where = f"{path}:{lineno}"
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: malformed JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{where}: expected a JSON object")
            unknown = set(obj) - _ALLOWED_USER_KEYS
            if unknown:
                raise DataError(f"{where}: unknown keys {sorted(unknown)}")
            if "id" not in obj or not isinstance(obj["id"], str) or not obj["id"]:
                raise DataError(f"{where}: missing or invalid 'id'")
            uid = obj["id"]
            if uid in seen:
                raise DataError(f"{where}: duplicate user id {uid!r}")
            seen.add(uid)

            numerical: list[float | None] = []
            for name in NUMERICAL_FIELDS:
                numerical.append(_parse_numeric(name, obj[name], where) if name in obj else None)

            categorical: list[bool | None] = []
            for name in CATEGORICAL_FIELDS:
                if name in obj:
                    if not isinstance(obj[name], bool):
                        raise DataError(f"{where}: field '{name}' must be a boolean")
                    categorical.append(obj[name])
                else:
                    categorical.append(None)

            label = None
            if "label" in obj:
                if obj["label"] not in LABELS:
                    raise DataError(f"{where}: label must be 'human' or 'bot'")
                label = LABELS[obj["label"]]
            split = "unlabeled"
            if "split" in obj:
                if obj["split"] not in SPLITS:
                    raise DataError(f"{where}: split must be one of {SPLITS}")
                split = obj["split"]
            if label is not None and split == "unlabeled":
                raise DataError(f"{where}: labeled user {uid!r} has no split")
            if label is None and split != "unlabeled":
                raise DataError(f"{where}: user {uid!r} in split '{split}' has no label")

            records.append(UserRecord(uid, numerical, categorical, label, split))
    return records


def build_masks(records: Sequence[UserRecord]) -> SplitMasks:
    n = len(records)
    masks = {s: np.zeros(n, dtype=bool) for s in SPLITS}
    for i, rec in enumerate(records):
        if rec.split != "unlabeled":
            masks[rec.split][i] = True
    return SplitMasks(masks["train"], masks["val"], masks["test"])


def labels_vector(records: Sequence[UserRecord]) -> np.ndarray:
    return np.array([-1 if r.label is None else r.label for r in records], dtype=np.int64)


def id_index(records: Sequence[UserRecord]) -> dict[str, int]:
    return {rec.user_id: i for i, rec in enumerate(records)}


# ---------------------------------------------------------------------------
# property encoders


def compute_numeric_stats(records: Sequence[UserRecord], masks: SplitMasks) -> NumericStats:
    """Population mean/std per column over train rows with present values."""
    if not masks.train.any():
        raise DataError("train split is empty")
    train_rows = [records[i] for i in np.flatnonzero(masks.train)]
    mean = np.zeros(6)
    std = np.zeros(6)
    for c, name in enumerate(NUMERICAL_FIELDS):
        vals = np.array([r.numerical[c] for r in train_rows if r.numerical[c] is not None])
        if vals.size == 0:
            raise DataError(f"no train-split values present for numerical column '{name}'")
        mean[c] = vals.mean()
        std[c] = np.sqrt(((vals - mean[c]) ** 2).mean())
    return NumericStats(mean, std)


def encode_numerical(records: Sequence[UserRecord], stats: NumericStats) -> np.ndarray:
    """Z-score with train stats; absent values and zero-variance columns map to 0."""
    out = np.zeros((len(records), 6))
    live = stats.std > ZERO_VARIANCE_EPS
    for i, rec in enumerate(records):
        for c in range(6):
            v = rec.numerical[c]
            if v is not None and live[c]:
                out[i, c] = (v - stats.mean[c]) / stats.std[c]
    return out


def encode_categorical(records: Sequence[UserRecord]) -> np.ndarray:
    """Each property becomes a [is_true, is_false] pair; absent -> [0, 0]."""
    out = np.zeros((len(records), 2 * len(CATEGORICAL_FIELDS)))
    for i, rec in enumerate(records):
        for c, v in enumerate(rec.categorical):
            if v is not None:
                out[i, 2 * c + (0 if v else 1)] = 1.0
    return out


# ---------------------------------------------------------------------------
# embeddings


def load_embeddings(path, expected_count: int) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise DataError(f"{path}: bad embedding magic {magic!r}, expected {EMBEDDING_MAGIC!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise DataError(f"{path}: truncated embedding header")
        count, dim = struct.unpack("<II", header)
        if dim == 0:
            raise DataError(f"{path}: embedding dim must be positive")
        if count != expected_count:
            raise DataError(f"{path}: embedding count {count} does not match dataset node count {expected_count}")
        payload = fh.read(4 * count * dim)
        if len(payload) != 4 * count * dim:
            raise DataError(f"{path}: truncated embedding payload "
                            f"({len(payload)} of {4 * count * dim} bytes)")
        if fh.read(1):
            raise DataError(f"{path}: trailing bytes after embedding payload")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(count, dim)
    return EmbeddingMatrix(count, dim, data)


def hash_embed(text: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic signed bag-of-tokens hashing, L2-normalized.

    A stand-in for pretrained text encoders so the pipeline runs offline:
    tokens are lowercased whitespace splits, each hashed (keyed blake2b) to a
    bucket and a sign. The zero vector is returned for token-free text.
    """
    if dim <= 0:
        raise DataError("hash_embed dim must be positive")
    key = int(seed).to_bytes(8, "little", signed=False)
    vec = np.zeros(dim)
    for token in text.lower().split():
        digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest()
        h = int.from_bytes(digest, "little")
        vec[(h >> 1) % dim] += 1.0 if h & 1 else -1.0
    norm = float(np.linalg.norm(vec))
    if norm > 0.0:
        vec /= norm
    return vec


def hash_embed_texts(ids: Sequence[str], texts_path, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Build description/tweet matrices from texts.jsonl via hash_embed.

    texts.jsonl lines look like ``{"id": ..., "description": ..., "tweets":
    [...]}``. Users missing from the file get zero rows; the per-user tweet
    vector is the mean over per-tweet embeddings (zero for tweetless users).
    """
    index = {uid: i for i, uid in enumerate(ids)}
    desc = np.zeros((len(ids), dim))
    tweets = np.zeros((len(ids), dim))
    seen: set[str] = set()
    with open(texts_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            where = f"{texts_path}:{lineno}"
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{where}: malformed JSON ({exc.msg})") from exc
            uid = obj.get("id")
            if uid not in index:
                raise DataError(f"{where}: unknown user id {uid!r}")
            if uid in seen:
                raise DataError(f"{where}: duplicate texts for user {uid!r}")
            seen.add(uid)
            row = index[uid]
            desc[row] = hash_embed(str(obj.get("description", "")), dim, seed)
            per_tweet = [hash_embed(str(t), dim, seed + 1) for t in obj.get("tweets", [])]
            if per_tweet:
                tweets[row] = np.mean(per_tweet, axis=0)
    return desc, tweets


# ---------------------------------------------------------------------------
# edges and graph


def parse_edges(path) -> list[tuple[str, str, str | None]]:
    edges: list[tuple[str, str, str | None]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty edge file") from None
        if header not in (["source", "target"], ["source", "target", "relation"]):
            raise DataError(f"{path}: edge header must be source,target[,relation], got {header}")
        has_relation = len(header) == 3
        for row in reader:
            where = f"{path}:{reader.line_num}"
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{where}: expected {len(header)} fields, got {len(row)}")
            relation: str | None = None
            if has_relation:
                relation = row[2]
                if relation not in RELATIONS:
                    raise DataError(f"{where}: relation must be one of {RELATIONS}, got {relation!r}")
            if not row[0] or not row[1]:
                raise DataError(f"{where}: empty endpoint id")
            edges.append((row[0], row[1], relation))
    return edges


def _csr_from_pairs(pairs: np.ndarray, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Sorted CSR from deduplicated (src, dst) int pairs."""
    if pairs.size == 0:
        return np.zeros(n_nodes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    counts = np.bincount(pairs[:, 0], minlength=n_nodes)
    offsets = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, pairs[:, 1].copy()


def build_graph(edges: Iterable[tuple[str, str, str | None] | tuple[str, str]],
                ids: dict[str, int]) -> HeteroGraph:
    """Materialize follow edges into both relational neighborhoods.

    Each follow edge u->v inserts v into u's "following" list and u into v's
    "follower" list, so relation duality holds by construction. Duplicates
    collapse; neighbor lists come out sorted ascending.
    """
    n = len(ids)
    follows: set[tuple[int, int]] = set()
    for edge in edges:
        src, dst = edge[0], edge[1]
        relation = edge[2] if len(edge) > 2 else None
        for endpoint in (src, dst):
            if endpoint not in ids:
                raise DataError(f"edge endpoint {endpoint!r} is not a known user id")
        u, v = ids[src], ids[dst]
        if relation == "follower":
            u, v = v, u
        follows.add((u, v))

    pairs = np.array(sorted(follows), dtype=np.int64).reshape(-1, 2)
    fwd_off, fwd_idx = _csr_from_pairs(pairs, n)
    rev_off, rev_idx = _csr_from_pairs(pairs[:, ::-1], n)
    return HeteroGraph(n, (fwd_off, rev_off), (fwd_idx, rev_idx))


# ---------------------------------------------------------------------------
# dataset bundle (.npz)

_BUNDLE_KEYS = (
    "ids", "desc", "tweets", "numerical", "categorical", "labels",
    "train_mask", "val_mask", "test_mask",
    "following_offsets", "following_indices", "follower_offsets", "follower_indices",
    "num_mean", "num_std",
)


def save_bundle(path, dataset: Dataset) -> None:
    g = dataset.graph
    with open(path, "wb") as fh:  # np.savez would append .npz to bare paths
        _write_bundle(fh, dataset, g)


def _write_bundle(fh, dataset: Dataset, g: HeteroGraph) -> None:
    np.savez(
        fh,
        ids=np.array(dataset.ids, dtype=np.str_),
        desc=dataset.features.desc,
        tweets=dataset.features.tweets,
        numerical=dataset.features.numerical,
        categorical=dataset.features.categorical,
        labels=dataset.labels,
        train_mask=dataset.masks.train,
        val_mask=dataset.masks.val,
        test_mask=dataset.masks.test,
        following_offsets=g.offsets[0],
        following_indices=g.indices[0],
        follower_offsets=g.offsets[1],
        follower_indices=g.indices[1],
        num_mean=dataset.num_stats.mean,
        num_std=dataset.num_stats.std,
    )


def load_bundle(path) -> Dataset:
    try:
        with np.load(path, allow_pickle=False) as npz:
            missing = set(_BUNDLE_KEYS) - set(npz.files)
            if missing:
                raise DataError(f"{path}: bundle is missing arrays {sorted(missing)}")
            arrays = {k: npz[k] for k in _BUNDLE_KEYS}
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: cannot read bundle ({exc})") from exc
    ids = [str(u) for u in arrays["ids"]]
    graph = HeteroGraph(
        len(ids),
        (arrays["following_offsets"], arrays["follower_offsets"]),
        (arrays["following_indices"], arrays["follower_indices"]),
    )
    features = FeatureBundle(
        desc=arrays["desc"].astype(np.float64),
        tweets=arrays["tweets"].astype(np.float64),
        numerical=arrays["numerical"].astype(np.float64),
        categorical=arrays["categorical"].astype(np.float64),
    )
    masks = SplitMasks(arrays["train_mask"].astype(bool),
                       arrays["val_mask"].astype(bool),
                       arrays["test_mask"].astype(bool))
    labels = arrays["labels"].astype(np.int64)
    for name, mask in (("train", masks.train), ("val", masks.val), ("test", masks.test)):
        if (labels[mask] < 0).any():
            raise DataError(f"{path}: {name} mask covers unlabeled users")
    return Dataset(ids, features, labels, masks, graph,
                   NumericStats(arrays["num_mean"].astype(np.float64),
                                arrays["num_std"].astype(np.float64)))


def assemble_dataset(records: Sequence[UserRecord],
                     edges: Iterable[tuple[str, str, str | None]],
                     desc: np.ndarray, tweets: np.ndarray) -> Dataset:
    """Glue the ingest steps together (parsing and embeddings done upstream)."""
    n = len(records)
    if desc.shape[0] != n or tweets.shape[0] != n:
        raise DataError(f"embedding rows ({desc.shape[0]}/{tweets.shape[0]}) "
                        f"do not match user count {n}")
    masks = build_masks(records)
    if not masks.train.any():
        raise DataError("train split is empty")
    stats = compute_numeric_stats(records, masks)
    features = FeatureBundle(
        desc=np.asarray(desc, dtype=np.float64),
        tweets=np.asarray(tweets, dtype=np.float64),
        numerical=encode_numerical(records, stats),
        categorical=encode_categorical(records),
    )
    graph = build_graph(edges, id_index(records))
    return Dataset([r.user_id for r in records], features, labels_vector(records),
                   masks, graph, stats)
