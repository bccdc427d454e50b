"""Relational message passing layers and their homogeneous-graph substitutes.

The relational layer updates node i as

    x_i' = Theta_self . x_i + sum_r sum_{j in N_r(i)} (1/|N_r(i)|) Theta_r . x_j

with one projection per relation and no bias or activation inside the layer.
An empty neighborhood contributes a zero row (the empty sum). The GCN, GAT
and MLP variants exist for the architecture ablation; GCN/GAT run on the
homogenized graph (union of both relations, symmetrized, self-loops added).

Differentiable sparse aggregation is recorded on the tensor tape here; the
dense core stays oblivious to graphs. Hot paths go through
:mod:`botgnn.kernels`; cached per-graph plans (inverse degrees, transposes,
the merged graph) live on the HeteroGraph instance since graphs are immutable
after construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError
from .ingest import RELATIONS, HeteroGraph
from .tensor import Tensor, _finalize, add, add_bias, leaky_relu, matmul, slice_rows, transpose

GAT_ATTENTION_SLOPE = 0.2


class GnnVariant(enum.Enum):
    RGCN = "rgcn"
    GCN = "gcn"
    GAT = "gat"
    MLP = "mlp"


@dataclass
class RgcnLayerParams:
    """Square self/per-relation projections for one relational layer."""

    theta_self: Tensor
    theta_rel: tuple[Tensor, ...]  # one per relation, RELATIONS order

    def __post_init__(self):
        d = self.theta_self.data.shape
        if d[0] != d[1]:
            raise DataError("theta_self must be square")
        if len(self.theta_rel) != len(RELATIONS):
            raise DataError(f"need one relation projection per relation {RELATIONS}")
        for t in self.theta_rel:
            if t.data.shape != d:
                raise DataError("relation projections must match theta_self's shape")


# ---------------------------------------------------------------------------
# cached per-graph plans


@dataclass
class _AggPlan:
    offsets: np.ndarray
    indices: np.ndarray
    inv_count: np.ndarray     # 1/|N_r(i)|, 0 for empty neighborhoods
    t_offsets: np.ndarray     # transpose CSR, for the backward scatter
    t_indices: np.ndarray
    t_weights: np.ndarray     # inv_count of the original destination, per edge


def _transpose_csr(offsets: np.ndarray, indices: np.ndarray, n: int):
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
    order = np.lexsort((dst, indices))
    t_indices = dst[order]
    counts = np.bincount(indices, minlength=n)
    t_offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=t_offsets[1:])
    return t_offsets, t_indices, order


def _agg_plan(g: HeteroGraph, relation: int) -> _AggPlan:
    key = ("agg", relation)
    if key not in g._cache:
        offsets, indices = g.offsets[relation], g.indices[relation]
        counts = np.diff(offsets).astype(np.float64)
        inv = np.zeros_like(counts)
        np.divide(1.0, counts, out=inv, where=counts > 0)
        t_off, t_idx, order = _transpose_csr(offsets, indices, g.n_nodes)
        dst = np.repeat(np.arange(g.n_nodes, dtype=np.int64), np.diff(offsets))
        t_weights = inv[dst[order]]
        g._cache[key] = _AggPlan(offsets, indices, inv, t_off, t_idx, t_weights)
    return g._cache[key]


@dataclass
class MergedGraph:
    """Union of both relations, symmetrized, with self-loops; CSR sorted."""

    n_nodes: int
    offsets: np.ndarray
    indices: np.ndarray
    dst: np.ndarray           # destination node per edge (repeat-expanded rows)
    gcn_weights: np.ndarray   # 1 / sqrt(deg_i * deg_j) per edge, self-loops included


def merged_graph(g: HeteroGraph) -> MergedGraph:
    if "merged" not in g._cache:
        n = g.n_nodes
        pair_keys = [np.arange(n, dtype=np.int64) * n + np.arange(n, dtype=np.int64)]  # self-loops
        for rel in range(len(RELATIONS)):
            src = np.repeat(np.arange(n, dtype=np.int64), np.diff(g.offsets[rel]))
            dst = g.indices[rel]
            pair_keys.append(src * n + dst)
            pair_keys.append(dst * n + src)
        keys = np.unique(np.concatenate(pair_keys))
        src, dst = keys // n, keys % n
        counts = np.bincount(src, minlength=n)
        offsets = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        deg = counts.astype(np.float64)
        weights = 1.0 / np.sqrt(deg[src] * deg[dst])
        g._cache["merged"] = MergedGraph(n, offsets, dst, src, weights)
    return g._cache["merged"]


# ---------------------------------------------------------------------------
# tape-recorded sparse ops


def relational_mean_aggregate(h: Tensor, g: HeteroGraph, relation: int) -> Tensor:
    """Row i of the result is the mean of h over N_r(i); empty -> zeros."""
    if h.data.shape[0] != g.n_nodes:
        raise DataError(f"feature rows {h.data.shape[0]} != graph nodes {g.n_nodes}")
    plan = _agg_plan(g, relation)
    out = kernels.mean_gather(plan.offsets, plan.indices, plan.inv_count, h.data)

    def backward(grad: np.ndarray) -> None:
        if h.requires_grad:
            h.accumulate_grad(kernels.weighted_gather(
                plan.t_offsets, plan.t_indices, plan.t_weights, grad))

    return _finalize("relational_mean_aggregate", out, (h,), backward)


def _symmetric_propagate(h: Tensor, m: MergedGraph) -> Tensor:
    """GCN propagation by the normalized merged adjacency (symmetric, so the
    backward pass reuses the forward structure)."""
    out = kernels.weighted_gather(m.offsets, m.indices, m.gcn_weights, h.data)

    def backward(grad: np.ndarray) -> None:
        if h.requires_grad:
            h.accumulate_grad(kernels.weighted_gather(
                m.offsets, m.indices, m.gcn_weights, grad))

    return _finalize("gcn_propagate", out, (h,), backward)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index, dtype=np.int64)

    def backward(grad: np.ndarray) -> None:
        if x.requires_grad:
            acc = np.zeros_like(x.data)
            np.add.at(acc, index, grad)
            x.accumulate_grad(acc)

    return _finalize("gather_rows", x.data[index], (x,), backward)


def segment_sum(x: Tensor, offsets: np.ndarray) -> Tensor:
    n = offsets.shape[0] - 1
    ones = np.ones(x.data.shape[0])
    out = kernels.weighted_gather(offsets, np.arange(x.data.shape[0], dtype=np.int64), ones, x.data)
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))

    def backward(grad: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(grad[dst])

    return _finalize("segment_sum", out, (x,), backward)


def segment_softmax(x: Tensor, offsets: np.ndarray) -> Tensor:
    """Column-vector softmax within each CSR segment (max-shifted)."""
    if x.data.shape[1] != 1:
        raise DataError("segment_softmax expects an (E, 1) tensor")
    n = offsets.shape[0] - 1
    vals = x.data[:, 0]
    dst = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
    seg_max = np.full(n, -np.inf)
    np.maximum.at(seg_max, dst, vals)
    e = np.exp(vals - seg_max[dst])
    denom = np.bincount(dst, weights=e, minlength=n)
    alpha = (e / denom[dst])[:, None]

    def backward(grad: np.ndarray) -> None:
        if x.requires_grad:
            weighted = (grad * alpha)[:, 0]
            seg_dot = np.bincount(dst, weights=weighted, minlength=n)
            x.accumulate_grad(alpha * (grad - seg_dot[dst][:, None]))

    return _finalize("segment_softmax", alpha, (x,), backward)


def scale_rows(x: Tensor, c: Tensor) -> Tensor:
    """Multiply each row of x (E, d) by the matching entry of c (E, 1)."""
    if c.data.shape != (x.data.shape[0], 1):
        raise DataError("scale_rows expects an (E, 1) coefficient tensor")

    def backward(grad: np.ndarray) -> None:
        if x.requires_grad:
            x.accumulate_grad(grad * c.data)
        if c.requires_grad:
            c.accumulate_grad((grad * x.data).sum(axis=1, keepdims=True))

    return _finalize("scale_rows", x.data * c.data, (x, c), backward)


# ---------------------------------------------------------------------------
# layers


def rgcn_layer(h: Tensor, g: HeteroGraph, params: RgcnLayerParams) -> Tensor:
    if params.theta_self.data.shape[0] != h.data.shape[1]:
        raise DataError(f"layer width {params.theta_self.data.shape[0]} != feature width {h.data.shape[1]}")
    out = matmul(h, transpose(params.theta_self))
    for rel, theta in enumerate(params.theta_rel):
        out = out + matmul(relational_mean_aggregate(h, g, rel), transpose(theta))
    return out


def gcn_layer(h: Tensor, g: HeteroGraph, w: Tensor) -> Tensor:
    return matmul(_symmetric_propagate(h, merged_graph(g)), transpose(w))


def _gat_alpha(hw: Tensor, m: MergedGraph, a: Tensor, d: int) -> Tensor:
    s_dst = matmul(hw, slice_rows(a, 0, d))      # contribution of the destination
    s_src = matmul(hw, slice_rows(a, d, 2 * d))  # contribution of the neighbor
    logits = leaky_relu(add(gather_rows(s_dst, m.dst), gather_rows(s_src, m.indices)),
                        GAT_ATTENTION_SLOPE)
    return segment_softmax(logits, m.offsets)


def gat_layer(h: Tensor, g: HeteroGraph, w: Tensor, a: Tensor) -> Tensor:
    """Single-head attention over the merged graph (self-loops included)."""
    d = w.data.shape[0]
    if a.data.shape != (2 * d, 1):
        raise DataError(f"attention vector must be ({2 * d}, 1), got {a.shape}")
    m = merged_graph(g)
    hw = matmul(h, transpose(w))
    alpha = _gat_alpha(hw, m, a, d)
    return segment_sum(scale_rows(gather_rows(hw, m.indices), alpha), m.offsets)


def gat_attention_weights(h: Tensor, g: HeteroGraph, w: Tensor, a: Tensor):
    """Attention coefficients plus segment offsets, for inspection and tests."""
    m = merged_graph(g)
    d = w.data.shape[0]
    alpha = _gat_alpha(matmul(h, transpose(w)), m, a, d)
    return alpha.data[:, 0], m.offsets


def mlp_layer(h: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add_bias(matmul(h, transpose(w)), b)
