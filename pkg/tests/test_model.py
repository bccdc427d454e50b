"""Model assembly: encoders, forward pass, loss; checked against a
straight-line numpy reimplementation that never touches the tape."""

import numpy as np
import pytest

from botgnn.errors import DataError, NonFiniteError
from botgnn.fixtures import six_node_config, six_node_dataset
from botgnn.graph import GnnVariant
from botgnn.model import (
    FEATURE_NAMES,
    ModelConfig,
    ModelParams,
    encode_features,
    forward,
    input_widths,
    loss,
    run_model,
)
from botgnn.tensor import Tape, Tensor


def _fixture(l2=0.0, **overrides):
    ds = six_node_dataset()
    cfg = six_node_config(l2=l2, **overrides)
    params = ModelParams.init(cfg, input_widths(ds.features), seed=5)
    return ds, cfg, params


# ---------------------------------------------------------------------------
# straight-line oracle


def forward_oracle(ds, named, cfg):
    def lrelu(x):
        return np.where(x >= 0, x, cfg.slope * x)

    blocks = []
    raw = {"desc": ds.features.desc, "tweets": ds.features.tweets,
           "num": ds.features.numerical, "cat": ds.features.categorical}
    for name in FEATURE_NAMES:
        if name in cfg.features:
            blocks.append(lrelu(raw[name] @ named[f"enc.{name}.W"].T + named[f"enc.{name}.b"]))
        else:
            blocks.append(np.zeros((ds.n_nodes, cfg.dim // 4)))
    r = np.hstack(blocks)
    x = lrelu(r @ named["in.W_1"].T + named["in.b_1"])
    for l in range(cfg.layers):
        nxt = x @ named[f"rgcn.{l}.theta_self"].T
        for rel, rel_name in enumerate(("following", "follower")):
            theta = named[f"rgcn.{l}.theta_{rel_name}"]
            agg = np.zeros_like(x)
            for i in range(ds.n_nodes):
                nb = list(ds.graph.neighbors(rel, i))
                if nb:
                    agg[i] = sum(x[j] for j in nb) / len(nb)
            nxt = nxt + agg @ theta.T
        x = nxt
        if cfg.inter_layer_activation and l < cfg.layers - 1:
            x = lrelu(x)
    h = lrelu(x @ named["post.W_2"].T + named["post.b_2"])
    logits = h @ named["out.W_O"].T + named["out.b_O"]
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return logits, e / e.sum(axis=1, keepdims=True)


def test_forward_matches_straight_line_oracle():
    ds, cfg, params = _fixture()
    logits, probs = run_model(ds, params, cfg)
    o_logits, o_probs = forward_oracle(ds, params.snapshot(), cfg)
    np.testing.assert_allclose(logits.data, o_logits, atol=1e-10)
    np.testing.assert_allclose(probs.data, o_probs, atol=1e-10)


def test_forward_oracle_with_inter_layer_activation():
    ds, cfg, params = _fixture(inter_layer_activation=True)
    _, probs = run_model(ds, params, cfg)
    _, o_probs = forward_oracle(ds, params.snapshot(), cfg)
    np.testing.assert_allclose(probs.data, o_probs, atol=1e-10)


# ---------------------------------------------------------------------------
# encoders


def test_encode_features_zero_params_zero_output():
    ds, cfg, params = _fixture()
    for t in params.tensors():
        t.data[:] = 0.0
    r = encode_features(ds.features, params, cfg)
    assert r.data.shape == (6, cfg.dim)
    assert (r.data == 0).all()


def test_encode_features_block_layout():
    ds, cfg, params = _fixture()
    r = encode_features(ds.features, params, cfg).data
    block = cfg.dim // 4
    named = params.snapshot()

    def lrelu(x):
        return np.where(x >= 0, x, cfg.slope * x)

    np.testing.assert_allclose(
        r[:, block:2 * block],
        lrelu(ds.features.tweets @ named["enc.tweets.W"].T + named["enc.tweets.b"]),
        atol=1e-12)


def test_disabled_modality_zeroes_its_block_only():
    ds, cfg, params = _fixture()
    full = encode_features(ds.features, params, cfg).data
    ablated_cfg = cfg.with_features(("desc", "num", "cat"))
    ablated = encode_features(ds.features, params, ablated_cfg).data
    block = cfg.dim // 4
    assert (ablated[:, block:2 * block] == 0).all()
    np.testing.assert_array_equal(ablated[:, :block], full[:, :block])
    np.testing.assert_array_equal(ablated[:, 2 * block:], full[:, 2 * block:])


def test_config_validation():
    with pytest.raises(DataError):
        ModelConfig(dim=130)
    with pytest.raises(DataError):
        ModelConfig(layers=0)
    with pytest.raises(DataError):
        ModelConfig(features=())
    with pytest.raises(DataError):
        ModelConfig(features=("desc", "bogus"))
    with pytest.raises(DataError):
        ModelConfig(loss_reduction="median")
    assert ModelConfig(features=("cat", "desc")).features == ("desc", "cat")


# ---------------------------------------------------------------------------
# forward head


def test_zero_output_head_gives_uniform_probs():
    ds, cfg, params = _fixture()
    params.w_out.data[:] = 0.0
    params.b_out.data[:] = 0.0
    _, probs = run_model(ds, params, cfg)
    np.testing.assert_allclose(probs.data, 0.5, atol=1e-12)


def test_probs_rows_sum_to_one_and_argmax_matches_logits():
    ds, cfg, params = _fixture()
    logits, probs = run_model(ds, params, cfg)
    np.testing.assert_allclose(probs.data.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_array_equal(np.argmax(probs.data, axis=1),
                                  np.argmax(logits.data, axis=1))


def test_edgeless_rgcn_model_equals_mlp_model():
    ds, cfg, params = _fixture()
    edgeless = six_node_dataset()
    from botgnn.fixtures import graph_from_pairs

    edgeless.graph = graph_from_pairs(6, [])
    _, probs_rgcn = run_model(edgeless, params, cfg)

    mlp_cfg = six_node_config(variant=GnnVariant.MLP)
    mlp_params = ModelParams.init(mlp_cfg, input_widths(ds.features), seed=5)
    state = {k: v for k, v in params.snapshot().items() if not k.startswith("rgcn.")}
    for l in range(cfg.layers):
        state[f"mlp.{l}.W"] = params.layers[l].theta_self.data.copy()
        state[f"mlp.{l}.b"] = np.zeros((1, cfg.dim))
    mlp_params.load_state(state)
    _, probs_mlp = run_model(edgeless, mlp_params, mlp_cfg)
    assert np.abs(probs_rgcn.data - probs_mlp.data).max() < 1e-12


@pytest.mark.filterwarnings("ignore:overflow encountered")
def test_non_finite_error_identifies_stage():
    ds, cfg, params = _fixture()
    # encoders emit ~1e200-scale values; the input transform then overflows
    for name in FEATURE_NAMES:
        params.enc[name][0].data[:] = 1e200
    params.w1.data[:] = 1e200
    with pytest.raises(NonFiniteError, match="input transform"):
        run_model(ds, params, cfg)


# ---------------------------------------------------------------------------
# loss


def test_loss_symmetric_prediction_sum():
    ds, cfg, params = _fixture()
    cfg_sum = six_node_config(loss_reduction="sum")
    probs = Tensor(np.full((6, 2), 0.5))
    labels = np.array([1, 0, 1, 0, -1, -1])
    mask = np.array([True, True, True, True, False, False])
    value = loss(probs, labels, mask, params, cfg_sum).item()
    assert value == pytest.approx(4 * np.log(2.0), abs=1e-6)
    value_mean = loss(probs, labels, mask, params, cfg).item()
    assert value_mean == pytest.approx(np.log(2.0), abs=1e-9)


def test_loss_l2_term_only():
    ds, cfg, params = _fixture(l2=0.1)
    for t in params.tensors():
        t.data[:] = 0.0
    params.w1.data[0, 0] = 2.0
    probs = Tensor(np.array([[0.0, 1.0], [1.0, 0.0]]))
    labels = np.array([1, 0])
    mask = np.array([True, True])
    assert loss(probs, labels, mask, params, cfg).item() == pytest.approx(0.4, abs=1e-12)


def test_loss_decreases_to_zero_as_probs_approach_labels():
    ds, cfg, params = _fixture()
    labels = np.array([1, 0])
    mask = np.array([True, True])
    values = []
    for p in (0.6, 0.9, 0.99, 0.999999):
        probs = Tensor(np.array([[1 - p, p], [p, 1 - p]]))
        values.append(loss(probs, labels, mask, params, cfg).item())
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-5


def test_loss_strictly_positive_with_l2_unless_params_zero():
    ds, cfg, params = _fixture(l2=0.01)
    probs = Tensor(np.array([[0.0, 1.0]]))
    labels, mask = np.array([1]), np.array([True])
    assert loss(probs, labels, mask, params, cfg).item() > 0.0
    for t in params.tensors():
        t.data[:] = 0.0
    assert loss(probs, labels, mask, params, cfg).item() == 0.0


def test_loss_errors():
    ds, cfg, params = _fixture()
    probs = Tensor(np.full((6, 2), 0.5))
    with pytest.raises(DataError, match="empty mask"):
        loss(probs, ds.labels, np.zeros(6, dtype=bool), params, cfg)
    with pytest.raises(DataError, match="labeled"):
        loss(probs, np.full(6, -1), np.ones(6, dtype=bool), params, cfg)


def test_loss_gradient_check_both_l2():
    ds = six_node_dataset()
    for l2 in (0.0, 0.01):
        cfg = six_node_config(l2=l2)
        params = ModelParams.init(cfg, input_widths(ds.features), seed=5)

        from botgnn.tensor import grad_check

        def f(params=params, cfg=cfg):
            _, probs = run_model(ds, params, cfg)
            return loss(probs, ds.labels, ds.masks.train, params, cfg)

        assert grad_check(f, params.tensors()) < 1e-4


# ---------------------------------------------------------------------------
# ablation and optimization properties


def test_disabled_modality_inputs_cannot_affect_outputs():
    ds, _, params = _fixture()
    cfg = six_node_config().with_features(("desc", "num", "cat"))
    _, probs_before = run_model(ds, params, cfg)
    l_before = loss(probs_before, ds.labels, ds.masks.train, params, cfg).item()

    rng = np.random.default_rng(99)
    ds.features.tweets[:] = rng.normal(size=ds.features.tweets.shape) * 100
    _, probs_after = run_model(ds, params, cfg)
    l_after = loss(probs_after, ds.labels, ds.masks.train, params, cfg).item()
    np.testing.assert_array_equal(probs_before.data, probs_after.data)
    assert l_before == l_after


def test_single_gradient_step_decreases_loss():
    ds, cfg, params = _fixture()

    def compute(with_tape):
        params.zero_grad()
        if with_tape:
            with Tape() as tape:
                _, probs = run_model(ds, params, cfg)
                obj = loss(probs, ds.labels, ds.masks.train, params, cfg)
            tape.backward(obj)
        else:
            _, probs = run_model(ds, params, cfg)
            obj = loss(probs, ds.labels, ds.masks.train, params, cfg)
        return obj.item()

    before = compute(with_tape=True)
    for t in params.tensors():
        if t.grad is not None:
            t.data -= 1e-3 * t.grad
    after = compute(with_tape=False)
    assert after < before
