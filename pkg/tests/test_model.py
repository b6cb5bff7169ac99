import time

import numpy as np
import pytest
import scipy.sparse as sp

from mgad._validation import ValidationError
from mgad.graph import build_graph
from mgad.ingest import make_community_graph
from mgad.metapath import SamplerConfig, empty_subgraph, generate_anomaly_subgraph, subgraph_from_nodes
from mgad.model import (
    GraphData,
    MGADConfig,
    MGADModel,
    anomaly_scores,
    backward,
    decode_attributes,
    decode_structure_block,
    encode_graph,
    encode_subgraph,
    forward,
    fuse,
    init_model,
    load_checkpoint,
    loss,
    rank_scores,
    save_checkpoint,
    train,
)
from mgad.nn import GCNLayer, finite_difference_check

from conftest import random_graph
from dense_oracle import DenseMGAD, dense_norm

SMALL = dict(graph_encoder_dims=(8, 6), subgraph_encoder_dims=(8, 5), attr_decoder_dims=(7,))


def fixture(n=20, d=6, seed=0, labeled=4, **cfg):
    rng = np.random.default_rng(seed)
    g = random_graph(n, 0.25, d, rng, labeled=labeled)
    sub = generate_anomaly_subgraph(g, SamplerConfig(walks_per_node=3, seed=seed))
    config = MGADConfig(seed=seed, **{**SMALL, **cfg})
    model = init_model(config, d, np.random.default_rng(seed))
    return g, sub, GraphData(g, sub), model, config


def oracle_for(model, g, sub):
    return DenseMGAD(model, g.adjacency.toarray(), g.attributes, sub.index_map, sub.graph.adjacency.toarray())


# config / shapes ----------------------------------------------------------------

def test_default_shapes():
    config = MGADConfig()
    model = init_model(config, 1433, np.random.default_rng(0))
    assert [p.shape for p in model.parameters()[:2]] == [(1433, 64), (64, 64)]
    assert config.fused_dim == 128
    assert model.attr_decoder[0].d_in == 128 and model.attr_decoder[-1].d_out == 1433


def test_init_deterministic():
    a = init_model(MGADConfig(**SMALL), 5, np.random.default_rng(3))
    b = init_model(MGADConfig(**SMALL), 5, np.random.default_rng(3))
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p.value, q.value)


@pytest.mark.parametrize("kw", [dict(alpha=1.5), dict(alpha=-0.1), dict(graph_encoder_dims=(0,)),
                                dict(epochs=-1), dict(lr=0.0)])
def test_config_rejects(kw):
    with pytest.raises(ValidationError):
        MGADConfig(**kw)


def test_model_dimension_chain(rng):
    enc = [GCNLayer.init(4, 3, rng)]
    with pytest.raises(ValidationError):
        MGADModel(enc, [GCNLayer.init(4, 2, rng)], [GCNLayer.init(6, 4, rng)])
    with pytest.raises(ValidationError):
        MGADModel(enc, [GCNLayer.init(4, 2, rng)], [GCNLayer.init(5, 3, rng)])


# encoders / decoders ------------------------------------------------------------

def test_zero_attributes_zero_embedding():
    g = build_graph([(0, 1), (1, 2)], np.zeros((3, 4)))
    model = init_model(MGADConfig(**SMALL), 4, np.random.default_rng(0))
    data = GraphData(g)
    assert not encode_graph(model, data.norm_adj, g.attributes).any()


def test_single_node_encoder_is_weight_chain(rng):
    g = build_graph([], rng.standard_normal((1, 3)))
    model = init_model(MGADConfig(**SMALL), 3, rng)
    w1, w2 = (l.weight.value for l in model.graph_encoder)
    expected = np.maximum(g.attributes @ w1, 0) @ w2
    np.testing.assert_allclose(encode_graph(model, GraphData(g).norm_adj, g.attributes), expected, atol=1e-14)


def test_encoder_matches_dense_oracle():
    g, sub, data, model, _ = fixture(n=10)
    oracle = oracle_for(model, g, sub)
    z, _, x_hat = oracle.forward()
    state = forward(model, data)
    np.testing.assert_allclose(state.z, z, atol=1e-12)
    np.testing.assert_allclose(state.x_hat, x_hat, atol=1e-12)


def test_subgraph_lift_empty_and_whole():
    g, _, _, model, _ = fixture(n=10)
    assert not encode_subgraph(model, GraphData(g, empty_subgraph(g))).any()
    whole = subgraph_from_nodes(g, range(g.n_nodes))
    data = GraphData(g, whole)
    expected, _ = __import__("mgad.nn", fromlist=["stack_forward"]).stack_forward(
        data.norm_adj, g.attributes, model.subgraph_encoder)
    np.testing.assert_allclose(encode_subgraph(model, data), expected, atol=1e-14)


def test_subgraph_lift_positions():
    g, _, _, model, _ = fixture(n=10)
    sub = subgraph_from_nodes(g, [2, 5, 7])
    lifted = encode_subgraph(model, GraphData(g, sub))
    nonzero = np.flatnonzero(np.any(lifted != 0, axis=1))
    assert set(nonzero.tolist()) <= {2, 5, 7}
    assert not lifted[[0, 1, 3, 4, 6, 8, 9]].any()


def test_fuse():
    np.testing.assert_array_equal(fuse(np.array([[1.0, 2.0]]), np.array([[3.0]])), [[1.0, 2.0, 3.0]])
    z = fuse(np.ones((4, 64)), np.zeros((4, 64)))
    assert z.shape == (4, 128) and not z[:, 64:].any()
    with pytest.raises(ValidationError):
        fuse(np.ones((3, 2)), np.ones((4, 2)))


def test_structure_decoder():
    np.testing.assert_array_equal(decode_structure_block(np.zeros((4, 3)), 0, 4), np.full((4, 4), 0.5))
    z = np.eye(3)
    a_hat = decode_structure_block(z, 0, 3)
    assert np.all(a_hat[~np.eye(3, dtype=bool)] == 0.5)
    z = np.random.default_rng(1).standard_normal((6, 4))
    dense = 1 / (1 + np.exp(-(z @ z.T)))
    blocks = np.vstack([decode_structure_block(z, s, min(s + 4, 6)) for s in (0, 4)])
    np.testing.assert_allclose(blocks, dense, atol=1e-12)


def test_attribute_decoder_zero_and_single_node(rng):
    g, _, data, model, _ = fixture(n=10)
    assert not decode_attributes(model, data.norm_adj, np.zeros((10, 11))).any()
    config = MGADConfig(graph_encoder_dims=(2,), subgraph_encoder_dims=(1,), attr_decoder_dims=(2,),
                        hidden_activation="identity")
    m = init_model(config, 3, rng)
    z = rng.standard_normal((1, 3))
    w1, w2 = (l.weight.value for l in m.attr_decoder)
    np.testing.assert_allclose(decode_attributes(m, sp.csr_matrix([[1.0]]), z), z @ w1 @ w2, atol=1e-14)


# loss / scores ------------------------------------------------------------------

def test_loss_zero_on_perfect_reconstruction():
    g, sub, data, model, _ = fixture(n=8)
    state = forward(model, data)
    data.attributes = state.x_hat
    assert loss(data, state, 1.0) == 0.0


def test_alpha_one_ignores_structure():
    g, sub, data, model, _ = fixture(n=8)
    state = forward(model, data)
    assert loss(data, state, 1.0) == pytest.approx(np.sum((g.attributes - state.x_hat) ** 2), rel=1e-14)


@pytest.mark.parametrize("alpha", [0.0, 0.3, 0.8, 1.0])
def test_loss_and_scores_match_dense(alpha):
    g, sub, data, model, _ = fixture(n=8)
    oracle = oracle_for(model, g, sub)
    state = forward(model, data)
    assert abs(loss(data, state, alpha, block_size=3) - oracle.loss(alpha)) <= 1e-10
    report = anomaly_scores(model, data, alpha, block_size=3)
    np.testing.assert_allclose(report.scores, oracle.scores(alpha), rtol=0, atol=1e-10)


def test_alpha_zero_score_is_structure_residual():
    g, sub, data, model, _ = fixture(n=8)
    report = anomaly_scores(model, data, 0.0)
    np.testing.assert_array_equal(report.scores, report.structure_residual)


def test_perfect_reconstruction_scores_zero():
    g, sub, data, model, _ = fixture(n=8)
    state = forward(model, data)
    a_hat = decode_structure_block(state.z, 0, 8)
    data.attributes = state.x_hat
    data.adjacency = sp.csr_matrix(a_hat)
    assert np.all(anomaly_scores(model, data, 0.5, state=state).scores == 0)


def test_rank_ties_by_node_id():
    assert rank_scores(np.array([1.0, 3.0, 3.0, 0.5, 3.0])).tolist() == [1, 2, 4, 0, 3]


# gradients ----------------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_gradients_match_dense_oracle(alpha):
    g, sub, data, model, _ = fixture(n=20)
    state = forward(model, data)
    backward(model, data, state, alpha, block_size=6)
    for p, expected in zip(model.parameters(), oracle_for(model, g, sub).grads(alpha)):
        np.testing.assert_allclose(p.grad, expected, rtol=0, atol=1e-10 * max(1.0, np.abs(expected).max()))


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0])
def test_finite_difference_full_loss(alpha):
    g, sub, data, model, config = fixture(n=20)
    state = forward(model, data)
    backward(model, data, state, alpha, block_size=7)
    err = finite_difference_check(lambda: loss(data, forward(model, data), alpha, 7), model.parameters())
    assert err < 1e-4


def test_alpha_one_structure_gives_no_gradient():
    g, sub, data, model, _ = fixture(n=12)
    state = forward(model, data)
    backward(model, data, state, 1.0)
    grads1 = [p.grad.copy() for p in model.parameters()]
    data.adjacency = sp.csr_matrix(np.ones((12, 12)))
    backward(model, data, state, 1.0)
    for p, q in zip(model.parameters(), grads1):
        np.testing.assert_array_equal(p.grad, q)


def test_empty_subgraph_zero_encoder_gradients():
    g, _, _, model, _ = fixture(n=12)
    data = GraphData(g, empty_subgraph(g))
    backward(model, data, forward(model, data), 0.5)
    assert all(not l.weight.grad.any() for l in model.subgraph_encoder)
    assert any(l.weight.grad.any() for l in model.graph_encoder)


def test_backward_resets_gradients():
    g, sub, data, model, _ = fixture(n=12)
    state = forward(model, data)
    backward(model, data, state, 0.5)
    first = [p.grad.copy() for p in model.parameters()]
    backward(model, data, state, 0.5)
    for p, q in zip(model.parameters(), first):
        np.testing.assert_array_equal(p.grad, q)


# training -----------------------------------------------------------------------

def small_community(n=30, seed=0):
    rng = np.random.default_rng(seed)
    g = make_community_graph(n_nodes=n, groups_per_block=3, n_features=8, p_group=0.6, rng=rng)
    labels = np.zeros(n, dtype=bool)
    labels[[0, 15]] = True
    return g.with_(labels=labels)


def test_training_halves_loss():
    g = small_community()
    sub = generate_anomaly_subgraph(g, SamplerConfig(walks_per_node=3))
    _, history = train(g, sub, MGADConfig(epochs=200))
    assert len(history) == 200
    assert np.all(np.isfinite(history.loss))
    assert history.loss[-1] < 0.5 * history.loss[0]


def test_training_zero_epochs_and_determinism():
    g = small_community()
    sub = generate_anomaly_subgraph(g, SamplerConfig(walks_per_node=3))
    config = MGADConfig(epochs=0, **SMALL)
    model = init_model(config, g.n_features, np.random.default_rng(0))
    before = [p.value.copy() for p in model.parameters()]
    _, history = train(g, sub, config, model=model)
    assert len(history) == 0
    assert all(np.array_equal(p.value, q) for p, q in zip(model.parameters(), before))
    config = MGADConfig(epochs=20, **SMALL)
    _, h1 = train(g, sub, config)
    _, h2 = train(g, sub, config)
    assert h1.loss == h2.loss


def test_training_divergence_names_epoch():
    g = small_community()
    config = MGADConfig(epochs=5, lr=1e200, **SMALL)
    with np.errstate(all="ignore"), pytest.raises(FloatingPointError, match="epoch"):
        train(g, None, config)


def test_checkpoint_round_trip(tmp_path):
    g, sub, data, model, config = fixture(n=12)
    save_checkpoint(tmp_path / "m.bin", model, config)
    back, cfg = load_checkpoint(tmp_path / "m.bin")
    assert cfg == config
    for p, q in zip(model.parameters(), back.parameters()):
        np.testing.assert_array_equal(p.value, q.value)
        assert p.name == q.name
    np.testing.assert_array_equal(anomaly_scores(back, data, 0.5).scores, anomaly_scores(model, data, 0.5).scores)


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"not a checkpoint")
    with pytest.raises(ValidationError):
        load_checkpoint(tmp_path / "x.bin")
