"""Deterministic desk-scale fixtures and the gradient-check suite.

The six-node dataset is linearly separable by construction (bots and humans
sit on opposite sides of every modality) and carries a consistent follow
structure, so a correctly wired model reaches train accuracy 1.0 in a few
dozen epochs. The gradient suite runs finite-difference checks against the
tape for every layer type and for the full regularized loss; the CLI's
``gradcheck`` command and the acceptance tests share it.
"""

from __future__ import annotations

import numpy as np

from .graph import (
    RgcnLayerParams,
    gat_layer,
    gcn_layer,
    mlp_layer,
    rgcn_layer,
)
from .ingest import (
    Dataset,
    FeatureBundle,
    HeteroGraph,
    NumericStats,
    SplitMasks,
    build_graph,
)
from .model import ModelConfig, ModelParams, input_widths, loss, run_model
from .tensor import Tensor, grad_check, weighted_sum


def graph_from_pairs(n: int, pairs) -> HeteroGraph:
    ids = {f"n{i}": i for i in range(n)}
    return build_graph([(f"n{a}", f"n{b}") for a, b in pairs], ids)


def six_node_dataset(text_dim: int = 4) -> Dataset:
    """Separable fixture: 3 bots, 3 humans; train 0-3, val 4 (bot), test 5."""
    labels = np.array([1, 0, 1, 0, 1, 0], dtype=np.int64)
    offsets = np.linspace(-0.25, 0.25, 6)[:, None]
    sign = np.where(labels == 1, 1.0, -1.0)[:, None]
    base = np.tile(np.array([[1.0, -0.5, 0.75, -1.25]])[:, :text_dim], (6, 1))
    desc = sign * base + offsets
    tweets = -0.5 * sign * base + 0.5 * offsets
    numerical = sign * np.array([[1.2, -0.8, 0.6, -1.0, 0.9, -0.7]]) + 0.1 * offsets
    categorical = np.zeros((6, 22))
    categorical[labels == 1, 0] = 1.0   # bots: protected = true
    categorical[labels == 0, 1] = 1.0
    categorical[labels == 1, 4] = 1.0   # bots: verified = true
    categorical[labels == 0, 5] = 1.0
    # bots follow bots, humans follow humans, one cross edge
    graph = graph_from_pairs(6, [(0, 2), (2, 4), (4, 0), (1, 3), (3, 5), (5, 1), (0, 1)])
    masks = SplitMasks(
        np.array([True, True, True, True, False, False]),
        np.array([False, False, False, False, True, False]),
        np.array([False, False, False, False, False, True]),
    )
    stats = NumericStats(np.zeros(6), np.ones(6))
    features = FeatureBundle(desc, tweets, numerical, categorical)
    return Dataset([f"n{i}" for i in range(6)], features, labels, masks, graph, stats)


def six_node_config(**overrides) -> ModelConfig:
    defaults = dict(dim=8, layers=2, l2=0.0, loss_reduction="mean")
    defaults.update(overrides)
    return ModelConfig(**defaults)


def _random_graph(rng: np.random.Generator, n: int, p: float = 0.3) -> HeteroGraph:
    pairs = [(i, j) for i in range(n) for j in range(n)
             if i != j and rng.random() < p]
    return graph_from_pairs(n, pairs)


def gradcheck_suite(seed: int = 7) -> list[tuple[str, float]]:
    """(check name, max relative error) for every layer type and the loss."""
    rng = np.random.default_rng(seed)
    n, d = 6, 4
    g = _random_graph(rng, n)
    results: list[tuple[str, float]] = []

    h = Tensor(rng.normal(size=(n, d)), requires_grad=True)
    probe = rng.normal(size=(n, d))

    rgcn = RgcnLayerParams(
        Tensor(rng.normal(size=(d, d)), requires_grad=True),
        (Tensor(rng.normal(size=(d, d)), requires_grad=True),
         Tensor(rng.normal(size=(d, d)), requires_grad=True)))
    results.append(("rgcn_layer", grad_check(
        lambda: weighted_sum(rgcn_layer(h, g, rgcn), probe),
        [h, rgcn.theta_self, *rgcn.theta_rel])))

    w = Tensor(rng.normal(size=(d, d)), requires_grad=True)
    results.append(("gcn_layer", grad_check(
        lambda: weighted_sum(gcn_layer(h, g, w), probe), [h, w])))

    w_gat = Tensor(rng.normal(size=(d, d)), requires_grad=True)
    a_gat = Tensor(rng.normal(size=(2 * d, 1)), requires_grad=True)
    results.append(("gat_layer", grad_check(
        lambda: weighted_sum(gat_layer(h, g, w_gat, a_gat), probe), [h, w_gat, a_gat])))

    w_mlp = Tensor(rng.normal(size=(d, d)), requires_grad=True)
    b_mlp = Tensor(rng.normal(size=(1, d)), requires_grad=True)
    results.append(("mlp_layer", grad_check(
        lambda: weighted_sum(mlp_layer(h, w_mlp, b_mlp), probe), [h, w_mlp, b_mlp])))

    dataset = six_node_dataset()
    for l2 in (0.0, 0.01):
        cfg = six_node_config(l2=l2)
        params = ModelParams.init(cfg, input_widths(dataset.features), seed=seed)

        def objective(params=params, cfg=cfg):
            _, probs = run_model(dataset, params, cfg)
            return loss(probs, dataset.labels, dataset.masks.train, params, cfg)

        results.append((f"full_loss_l2={l2}", grad_check(objective, params.tensors())))
    return results
