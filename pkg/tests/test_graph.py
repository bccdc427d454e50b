"""Message-passing layers vs naive per-node oracles, plus layer properties.

Every oracle here recomputes the layer definition with explicit Python loops
over neighbor lists (column-vector math), touching neither the CSR kernels
nor the tape.
"""

import numpy as np
import pytest

from botgnn.fixtures import graph_from_pairs
from botgnn.graph import (
    GnnVariant,
    RgcnLayerParams,
    gat_attention_weights,
    gat_layer,
    gcn_layer,
    merged_graph,
    mlp_layer,
    relational_mean_aggregate,
    rgcn_layer,
)
from botgnn.tensor import Tape, Tensor, grad_check, weighted_sum


# ---------------------------------------------------------------------------
# oracles (independent reimplementations)


def mean_aggregate_oracle(h, g, rel):
    out = np.zeros_like(h)
    for i in range(g.n_nodes):
        nb = list(g.neighbors(rel, i))
        if nb:
            out[i] = sum(h[j] for j in nb) / len(nb)
    return out


def rgcn_oracle(h, g, theta_self, thetas):
    out = np.zeros_like(h)
    for i in range(g.n_nodes):
        acc = theta_self @ h[i]
        for rel, theta in enumerate(thetas):
            nb = list(g.neighbors(rel, i))
            for j in nb:
                acc = acc + (theta @ h[j]) / len(nb)
        out[i] = acc
    return out


def merged_neighbors_oracle(g):
    """Union of both relations, symmetric, with self-loops."""
    nbrs = [set([i]) for i in range(g.n_nodes)]
    for rel in (0, 1):
        for i in range(g.n_nodes):
            for j in g.neighbors(rel, i):
                nbrs[i].add(int(j))
                nbrs[int(j)].add(i)
    return nbrs


def gcn_oracle(h, g, w):
    nbrs = merged_neighbors_oracle(g)
    deg = np.array([len(s) for s in nbrs], dtype=float)
    out = np.zeros_like(h)
    for i in range(g.n_nodes):
        for j in nbrs[i]:
            out[i] += (w @ h[j]) / np.sqrt(deg[i] * deg[j])
    return out


def gat_oracle(h, g, w, a, slope=0.2):
    nbrs = merged_neighbors_oracle(g)
    d = w.shape[0]
    a_dst, a_src = a[:d, 0], a[d:, 0]
    out = np.zeros((g.n_nodes, d))
    for i in range(g.n_nodes):
        js = sorted(nbrs[i])
        logits = []
        for j in js:
            e = a_dst @ (w @ h[i]) + a_src @ (w @ h[j])
            logits.append(e if e >= 0 else slope * e)
        logits = np.array(logits)
        alpha = np.exp(logits - logits.max())
        alpha /= alpha.sum()
        for coef, j in zip(alpha, js):
            out[i] += coef * (w @ h[j])
    return out


# ---------------------------------------------------------------------------
# relational mean aggregation


def test_mean_aggregate_examples():
    g = graph_from_pairs(3, [(0, 1), (0, 2)])
    h = Tensor(np.array([[9.0, 9.0], [2.0, 0.0], [0.0, 4.0]]))
    out = relational_mean_aggregate(h, g, 0)
    np.testing.assert_array_equal(out.data[0], [1.0, 2.0])  # mean of h1, h2
    np.testing.assert_array_equal(out.data[1], [0.0, 0.0])  # empty neighborhood
    single = relational_mean_aggregate(h, graph_from_pairs(3, [(0, 1)]), 0)
    np.testing.assert_array_equal(single.data[0], h.data[1])


def test_mean_aggregate_matches_oracle_on_random_graphs():
    rng = np.random.default_rng(11)
    for _ in range(10):
        n = int(rng.integers(2, 11))
        pairs = [(a, b) for a in range(n) for b in range(n)
                 if a != b and rng.random() < 0.35]
        g = graph_from_pairs(n, pairs)
        h = Tensor(rng.normal(size=(n, 3)))
        for rel in (0, 1):
            np.testing.assert_allclose(relational_mean_aggregate(h, g, rel).data,
                                       mean_aggregate_oracle(h.data, g, rel), atol=1e-10)


# ---------------------------------------------------------------------------
# rgcn layer


def _rgcn_params(theta_self, theta_1, theta_2):
    return RgcnLayerParams(Tensor(theta_self), (Tensor(theta_1), Tensor(theta_2)))


def test_rgcn_self_only_identity():
    g = graph_from_pairs(3, [(0, 1), (1, 2)])
    h = Tensor(np.arange(6, dtype=float).reshape(3, 2))
    p = _rgcn_params(np.eye(2), np.zeros((2, 2)), np.zeros((2, 2)))
    np.testing.assert_allclose(rgcn_layer(h, g, p).data, h.data, atol=1e-15)


def test_rgcn_edgeless_is_projection():
    g = graph_from_pairs(4, [])
    rng = np.random.default_rng(13)
    h = Tensor(rng.normal(size=(4, 3)))
    p = _rgcn_params(rng.normal(size=(3, 3)), rng.normal(size=(3, 3)), rng.normal(size=(3, 3)))
    np.testing.assert_allclose(rgcn_layer(h, g, p).data, h.data @ p.theta_self.data.T,
                               atol=1e-12)


def test_rgcn_fixture_matches_double_loop_oracle():
    g = graph_from_pairs(3, [(0, 1), (1, 2), (2, 0), (0, 2)])
    rng = np.random.default_rng(17)
    h = Tensor(rng.normal(size=(3, 2)))
    mats = [rng.normal(size=(2, 2)) for _ in range(3)]
    p = _rgcn_params(*mats)
    np.testing.assert_allclose(rgcn_layer(h, g, p).data,
                               rgcn_oracle(h.data, g, mats[0], mats[1:]), atol=1e-10)


def test_rgcn_matches_oracle_on_random_graphs():
    rng = np.random.default_rng(19)
    for _ in range(10):
        n = int(rng.integers(2, 13))
        pairs = [(a, b) for a in range(n) for b in range(n)
                 if a != b and rng.random() < 0.3]
        g = graph_from_pairs(n, pairs)
        d = int(rng.integers(1, 5))
        h = Tensor(rng.normal(size=(n, d)))
        mats = [rng.normal(size=(d, d)) for _ in range(3)]
        got = rgcn_layer(h, g, _rgcn_params(*mats)).data
        np.testing.assert_allclose(got, rgcn_oracle(h.data, g, mats[0], mats[1:]),
                                   atol=1e-10)


# ---------------------------------------------------------------------------
# gcn layer


def test_gcn_isolated_node_with_self_loop():
    g = graph_from_pairs(1, [])
    h = Tensor(np.array([[2.0, -1.0]]))
    w = Tensor(np.array([[1.0, 2.0], [0.0, 1.0]]))
    np.testing.assert_allclose(gcn_layer(h, g, w).data, h.data @ w.data.T, atol=1e-14)


def test_gcn_two_node_hand_example():
    # one edge, self-loops added: all degrees 2, every Â entry 1/2
    g = graph_from_pairs(2, [(0, 1)])
    h = Tensor(np.array([[1.0], [3.0]]))
    out = gcn_layer(h, g, Tensor(np.array([[1.0]])))
    np.testing.assert_allclose(out.data, [[2.0], [2.0]], atol=1e-14)


def test_gcn_matches_oracle():
    rng = np.random.default_rng(23)
    for _ in range(5):
        n = int(rng.integers(2, 11))
        pairs = [(a, b) for a in range(n) for b in range(n)
                 if a != b and rng.random() < 0.3]
        g = graph_from_pairs(n, pairs)
        h = Tensor(rng.normal(size=(n, 3)))
        w = rng.normal(size=(3, 3))
        np.testing.assert_allclose(gcn_layer(h, g, Tensor(w)).data,
                                   gcn_oracle(h.data, g, w), atol=1e-10)


# ---------------------------------------------------------------------------
# gat layer


def test_gat_isolated_node():
    g = graph_from_pairs(1, [])
    h = Tensor(np.array([[1.0, 2.0]]))
    w = Tensor(np.array([[0.5, 1.0], [2.0, 0.0]]))
    a = Tensor(np.array([[0.3], [0.1], [-0.2], [0.4]]))
    np.testing.assert_allclose(gat_layer(h, g, w, a).data, h.data @ w.data.T, atol=1e-12)


def test_gat_zero_attention_is_uniform_mean():
    rng = np.random.default_rng(29)
    g = graph_from_pairs(5, [(0, 1), (1, 2), (3, 0), (2, 4)])
    h = Tensor(rng.normal(size=(5, 3)))
    w = rng.normal(size=(3, 3))
    out = gat_layer(h, g, Tensor(w), Tensor(np.zeros((6, 1)))).data
    nbrs = merged_neighbors_oracle(g)
    expected = np.stack([np.mean([w @ h.data[j] for j in nbrs[i]], axis=0)
                         for i in range(5)])
    np.testing.assert_allclose(out, expected, atol=1e-10)


def test_gat_matches_oracle_on_fixture():
    rng = np.random.default_rng(31)
    g = graph_from_pairs(3, [(0, 1), (1, 2)])
    h = Tensor(rng.normal(size=(3, 2)))
    w = rng.normal(size=(2, 2))
    a = rng.normal(size=(4, 1))
    np.testing.assert_allclose(gat_layer(h, g, Tensor(w), Tensor(a)).data,
                               gat_oracle(h.data, g, w, a), atol=1e-10)


def test_gat_attention_rows_sum_to_one():
    rng = np.random.default_rng(37)
    g = graph_from_pairs(6, [(a, b) for a in range(6) for b in range(6)
                             if a != b and rng.random() < 0.4])
    alpha, offsets = gat_attention_weights(Tensor(rng.normal(size=(6, 3))), g,
                                           Tensor(rng.normal(size=(3, 3))),
                                           Tensor(rng.normal(size=(6, 1))))
    sums = np.add.reduceat(alpha, offsets[:-1])
    np.testing.assert_allclose(sums, 1.0, atol=1e-6)


# ---------------------------------------------------------------------------
# mlp layer


def test_mlp_identity_and_edge_independence():
    h = Tensor(np.arange(8, dtype=float).reshape(4, 2))
    out = mlp_layer(h, Tensor(np.eye(2)), Tensor(np.zeros((1, 2))))
    np.testing.assert_array_equal(out.data, h.data)

    rng = np.random.default_rng(41)
    w = Tensor(rng.normal(size=(2, 2)))
    b = Tensor(rng.normal(size=(1, 2)))
    dense = mlp_layer(h, w, b).data
    assert np.array_equal(dense, mlp_layer(h, w, b).data)  # no graph argument at all


def test_mlp_equals_rgcn_with_zero_relations_plus_bias():
    rng = np.random.default_rng(43)
    g = graph_from_pairs(4, [(0, 1), (2, 3), (3, 0)])
    h = Tensor(rng.normal(size=(4, 3)))
    w = rng.normal(size=(3, 3))
    p = _rgcn_params(w, np.zeros((3, 3)), np.zeros((3, 3)))
    via_rgcn = rgcn_layer(h, g, p).data
    via_mlp = mlp_layer(h, Tensor(w), Tensor(np.zeros((1, 3)))).data
    np.testing.assert_allclose(via_rgcn, via_mlp, atol=1e-12)


# ---------------------------------------------------------------------------
# cross-layer properties


def _permute_graph(n, pairs, perm):
    return graph_from_pairs(n, [(perm[a], perm[b]) for a, b in pairs])


def test_permutation_equivariance_exact_for_integer_data():
    rng = np.random.default_rng(47)
    n, d = 10, 4
    for _ in range(5):
        pairs = [(a, b) for a in range(n) for b in range(n)
                 if a != b and rng.random() < 0.3]
        g = graph_from_pairs(n, pairs)
        h = rng.integers(-4, 5, size=(n, d)).astype(float)
        mats = [rng.integers(-2, 3, size=(d, d)).astype(float) for _ in range(3)]
        base = rgcn_layer(Tensor(h), g, _rgcn_params(*mats)).data

        perm = rng.permutation(n)
        inv = np.argsort(perm)
        gp = _permute_graph(n, pairs, perm)
        hp = h[inv]
        permuted = rgcn_layer(Tensor(hp), gp, _rgcn_params(*mats)).data
        assert np.array_equal(permuted, base[inv])


def test_edgeless_rgcn_stack_equals_mlp_stack():
    rng = np.random.default_rng(53)
    g = graph_from_pairs(5, [])
    h = Tensor(rng.normal(size=(5, 3)))
    x_r, x_m = h, h
    for _ in range(3):
        w = rng.normal(size=(3, 3))
        junk = rng.normal(size=(3, 3))
        x_r = rgcn_layer(x_r, g, _rgcn_params(w, junk, 2 * junk))
        x_m = mlp_layer(x_m, Tensor(w), Tensor(np.zeros((1, 3))))
    assert np.abs(x_r.data - x_m.data).max() < 1e-12


def test_all_layer_types_pass_grad_check():
    rng = np.random.default_rng(59)
    n, d = 6, 3
    g = graph_from_pairs(n, [(0, 1), (1, 2), (2, 3), (4, 0), (5, 2), (3, 5)])
    h = Tensor(rng.normal(size=(n, d)), requires_grad=True)
    probe = rng.normal(size=(n, d))

    p = RgcnLayerParams(Tensor(rng.normal(size=(d, d)), requires_grad=True),
                        (Tensor(rng.normal(size=(d, d)), requires_grad=True),
                         Tensor(rng.normal(size=(d, d)), requires_grad=True)))
    assert grad_check(lambda: weighted_sum(rgcn_layer(h, g, p), probe),
                      [h, p.theta_self, *p.theta_rel]) < 1e-4

    w = Tensor(rng.normal(size=(d, d)), requires_grad=True)
    assert grad_check(lambda: weighted_sum(gcn_layer(h, g, w), probe), [h, w]) < 1e-4

    wg = Tensor(rng.normal(size=(d, d)), requires_grad=True)
    ag = Tensor(rng.normal(size=(2 * d, 1)), requires_grad=True)
    assert grad_check(lambda: weighted_sum(gat_layer(h, g, wg, ag), probe),
                      [h, wg, ag]) < 1e-4

    wm = Tensor(rng.normal(size=(d, d)), requires_grad=True)
    bm = Tensor(rng.normal(size=(1, d)), requires_grad=True)
    assert grad_check(lambda: weighted_sum(mlp_layer(h, wm, bm), probe),
                      [h, wm, bm]) < 1e-4


def test_merged_graph_structure():
    g = graph_from_pairs(3, [(0, 1)])
    m = merged_graph(g)
    # node 2 only has its self-loop; 0 and 1 see each other plus self-loops
    assert list(m.indices[m.offsets[0]:m.offsets[1]]) == [0, 1]
    assert list(m.indices[m.offsets[1]:m.offsets[2]]) == [0, 1]
    assert list(m.indices[m.offsets[2]:m.offsets[3]]) == [2]
    assert GnnVariant("rgcn") is GnnVariant.RGCN
