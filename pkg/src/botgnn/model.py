"""End-to-end model: modality encoders, input transform, relational stack,
output MLP, softmax head and the regularized loss.

Each enabled modality (description/tweet embeddings, z-scored numerical,
one-hot categorical) passes through its own leaky-relu linear encoder into a
D/4-wide block; the four blocks concatenate into the fused user
representation r. Disabled modalities contribute zero blocks so every
configuration shares the same downstream shapes. After the input transform,
L graph layers of the configured variant run, then a leaky-relu MLP and a
2-way softmax head.

The loss is binary cross entropy on the bot probability over the labeled
training nodes (log clamped at 1e-12, summed or averaged) plus an L2 term
over every learnable tensor, weights and biases alike.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace
from typing import Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError, NonFiniteError
from .graph import (
    GnnVariant,
    RgcnLayerParams,
    gat_layer,
    gcn_layer,
    mlp_layer,
    rgcn_layer,
)
from .ingest import RELATIONS, Dataset, FeatureBundle, HeteroGraph
from .tensor import (
    Tensor,
    add,
    add_bias,
    column,
    concat_cols,
    leaky_relu,
    log_clamped,
    matmul,
    one_minus,
    scale,
    softmax_rows,
    sum_squares,
    transpose,
    weighted_sum,
)

FEATURE_NAMES = ("desc", "tweets", "num", "cat")


@dataclass(frozen=True)
class ModelConfig:
    dim: int = 128
    layers: int = 2
    variant: GnnVariant = GnnVariant.RGCN
    slope: float = 0.01
    inter_layer_activation: bool = False
    l2: float = 5e-3
    loss_reduction: str = "mean"
    features: tuple[str, ...] = FEATURE_NAMES
    text_dim: int | None = None  # optional validation of embedding widths

    def __post_init__(self):
        if self.dim <= 0 or self.dim % 4 != 0:
            raise DataError(f"dim must be a positive multiple of 4, got {self.dim}")
        if self.layers < 1:
            raise DataError("layer count must be >= 1")
        if self.l2 < 0:
            raise DataError("l2 coefficient must be nonnegative")
        if not 0.0 < self.slope < 1.0:
            raise DataError("slope must lie in (0, 1)")
        if self.loss_reduction not in ("sum", "mean"):
            raise DataError("loss_reduction must be 'sum' or 'mean'")
        unknown = set(self.features) - set(FEATURE_NAMES)
        if unknown:
            raise DataError(f"unknown feature names {sorted(unknown)}")
        if not self.features:
            raise DataError("at least one feature modality must be enabled")
        # canonical order, deduplicated
        object.__setattr__(self, "features",
                           tuple(n for n in FEATURE_NAMES if n in set(self.features)))

    def with_features(self, features: Sequence[str]) -> "ModelConfig":
        return replace(self, features=tuple(features))


def _uniform(rng: np.random.Generator, rows: int, cols: int, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=(rows, cols)), requires_grad=True)


def _zeros(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True)


@dataclass
class GcnLayerParams:
    w: Tensor


@dataclass
class GatLayerParams:
    w: Tensor
    a: Tensor


@dataclass
class MlpLayerParams:
    w: Tensor
    b: Tensor


class ModelParams:
    """All learnable tensors, addressable by canonical checkpoint names.

    Weight matrices keep the equations' (out, in) orientation and are applied
    as ``x @ W.T + b``. Encoder parameters exist for every modality even when
    a configuration disables some, so checkpoints stay shape-compatible
    across feature ablations.
    """

    def __init__(self, enc, w1, b1, layers, w2, b2, w_out, b_out, variant: GnnVariant):
        self.enc = enc              # {modality: (W, b)}
        self.w1, self.b1 = w1, b1
        self.layers = layers
        self.w2, self.b2 = w2, b2
        self.w_out, self.b_out = w_out, b_out
        self.variant = variant

    @classmethod
    def init(cls, cfg: ModelConfig, in_dims: Mapping[str, int], seed: int) -> "ModelParams":
        missing = set(FEATURE_NAMES) - set(in_dims)
        if missing:
            raise DataError(f"missing input widths for {sorted(missing)}")
        if cfg.text_dim is not None:
            for name in ("desc", "tweets"):
                if in_dims[name] != cfg.text_dim:
                    raise DataError(f"{name} embedding width {in_dims[name]} != text_dim {cfg.text_dim}")
        rng = np.random.default_rng(seed)
        d, block = cfg.dim, cfg.dim // 4
        enc = {}
        for name in FEATURE_NAMES:
            w = _uniform(rng, block, in_dims[name], in_dims[name])
            enc[name] = (w, _zeros(1, block))
        w1, b1 = _uniform(rng, d, d, d), _zeros(1, d)
        layers = []
        for _ in range(cfg.layers):
            if cfg.variant is GnnVariant.RGCN:
                layers.append(RgcnLayerParams(
                    _uniform(rng, d, d, d),
                    tuple(_uniform(rng, d, d, d) for _ in RELATIONS)))
            elif cfg.variant is GnnVariant.GCN:
                layers.append(GcnLayerParams(_uniform(rng, d, d, d)))
            elif cfg.variant is GnnVariant.GAT:
                layers.append(GatLayerParams(_uniform(rng, d, d, d),
                                             _uniform(rng, 2 * d, 1, 2 * d)))
            else:
                layers.append(MlpLayerParams(_uniform(rng, d, d, d), _zeros(1, d)))
        w2, b2 = _uniform(rng, d, d, d), _zeros(1, d)
        w_out, b_out = _uniform(rng, 2, d, d), _zeros(1, 2)
        return cls(enc, w1, b1, layers, w2, b2, w_out, b_out, cfg.variant)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name in FEATURE_NAMES:
            w, b = self.enc[name]
            out[f"enc.{name}.W"] = w
            out[f"enc.{name}.b"] = b
        out["in.W_1"] = self.w1
        out["in.b_1"] = self.b1
        for l, layer in enumerate(self.layers):
            if isinstance(layer, RgcnLayerParams):
                out[f"rgcn.{l}.theta_self"] = layer.theta_self
                for rel, theta in zip(RELATIONS, layer.theta_rel):
                    out[f"rgcn.{l}.theta_{rel}"] = theta
            elif isinstance(layer, GcnLayerParams):
                out[f"gcn.{l}.W"] = layer.w
            elif isinstance(layer, GatLayerParams):
                out[f"gat.{l}.W"] = layer.w
                out[f"gat.{l}.a"] = layer.a
            else:
                out[f"mlp.{l}.W"] = layer.w
                out[f"mlp.{l}.b"] = layer.b
        out["post.W_2"] = self.w2
        out["post.b_2"] = self.b2
        out["out.W_O"] = self.w_out
        out["out.b_O"] = self.b_out
        return out

    def tensors(self) -> list[Tensor]:
        return list(self.named().values())

    def zero_grad(self) -> None:
        for t in self.tensors():
            t.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named().items()}

    def load_state(self, arrays: Mapping[str, np.ndarray]) -> None:
        named = self.named()
        if set(arrays) != set(named):
            extra = sorted(set(arrays) - set(named))
            missing = sorted(set(named) - set(arrays))
            raise DataError(f"checkpoint names mismatch: extra={extra}, missing={missing}")
        for name, tensor in named.items():
            arr = np.asarray(arrays[name], dtype=np.float64)
            if arr.shape != tensor.data.shape:
                raise DataError(f"checkpoint tensor {name!r} has shape {arr.shape}, "
                                f"expected {tensor.data.shape}")
            tensor.data = arr.copy()


@contextlib.contextmanager
def _stage(label: str) -> Iterator[None]:
    try:
        yield
    except NonFiniteError as exc:
        raise NonFiniteError(exc.op, f"stage: {label}") from exc


def encode_features(features: FeatureBundle, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Fused user representation r: four D/4 blocks in fixed modality order."""
    n = features.n_users
    blocks = []
    with _stage("feature encoding"):
        for name in FEATURE_NAMES:
            if name in cfg.features:
                raw = features.block(name)
                w, b = params.enc[name]
                if raw.shape[1] != w.data.shape[1]:
                    raise DataError(f"modality '{name}' width {raw.shape[1]} != "
                                    f"encoder input width {w.data.shape[1]}")
                blocks.append(leaky_relu(add_bias(matmul(Tensor(raw), transpose(w)), b),
                                         cfg.slope))
            else:
                blocks.append(Tensor(np.zeros((n, cfg.dim // 4))))
        return concat_cols(blocks)


def forward(g: HeteroGraph, r: Tensor, params: ModelParams,
            cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    """Logits and softmax probabilities for every node."""
    if r.data.shape[1] != cfg.dim:
        raise DataError(f"representation width {r.data.shape[1]} != dim {cfg.dim}")
    with _stage("input transform"):
        x = leaky_relu(add_bias(matmul(r, transpose(params.w1)), params.b1), cfg.slope)
    for l, layer in enumerate(params.layers):
        with _stage(f"graph layer {l}"):
            if isinstance(layer, RgcnLayerParams):
                x = rgcn_layer(x, g, layer)
            elif isinstance(layer, GcnLayerParams):
                x = gcn_layer(x, g, layer.w)
            elif isinstance(layer, GatLayerParams):
                x = gat_layer(x, g, layer.w, layer.a)
            else:
                x = mlp_layer(x, layer.w, layer.b)
            if cfg.inter_layer_activation and l < len(params.layers) - 1:
                x = leaky_relu(x, cfg.slope)
    with _stage("output transform"):
        h = leaky_relu(add_bias(matmul(x, transpose(params.w2)), params.b2), cfg.slope)
    with _stage("classifier head"):
        logits = add_bias(matmul(h, transpose(params.w_out)), params.b_out)
        probs = softmax_rows(logits)
    return logits, probs


def loss(probs: Tensor, labels: np.ndarray, train_mask: np.ndarray,
         params: ModelParams, cfg: ModelConfig) -> Tensor:
    """Masked binary cross entropy plus l2 * sum of squared parameters."""
    mask = np.asarray(train_mask, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise DataError("loss over an empty mask")
    y = np.asarray(labels, dtype=np.float64)
    if (y[mask] < 0).any():
        raise DataError("masked nodes must be labeled")
    w_pos = (mask & (y == 1))[:, None].astype(np.float64)
    w_neg = (mask & (y == 0))[:, None].astype(np.float64)

    p_bot = column(probs, 1)
    data_term = scale(add(weighted_sum(log_clamped(p_bot), w_pos),
                          weighted_sum(log_clamped(one_minus(p_bot)), w_neg)), -1.0)
    if cfg.loss_reduction == "mean":
        data_term = scale(data_term, 1.0 / count)
    if cfg.l2 == 0.0:
        return data_term
    reg = None
    for t in params.tensors():
        sq = sum_squares(t)
        reg = sq if reg is None else add(reg, sq)
    return add(data_term, scale(reg, cfg.l2))


def run_model(dataset: Dataset, params: ModelParams,
              cfg: ModelConfig) -> tuple[Tensor, Tensor]:
    r = encode_features(dataset.features, params, cfg)
    return forward(dataset.graph, r, params, cfg)


def input_widths(features: FeatureBundle) -> dict[str, int]:
    return {name: features.block(name).shape[1] for name in FEATURE_NAMES}
