import math

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from hcad.graph import from_edges, normalize_dense_or_sparse
from hcad.manifold import (
    DimensionError,
    exp_map,
    lift_feature,
    log_map,
    membership_error,
    mobius_add_bias,
    mobius_matvec,
    origin,
)
from hcad.model import (
    HCADModel,
    ModelConfig,
    collate,
    decode_tangent,
    discriminate,
    hgcn_layer,
    readout,
)
from hcad.sampler import NEGATIVE, POSITIVE, InstancePair, RwrConfig, make_pair

T = torch.float64


def rand_params(rng, d_in, d_out):
    W = torch.as_tensor(rng.normal(size=(d_out + 1, d_in + 1)) * 0.5)
    b = torch.as_tensor(np.r_[0.0, rng.normal(size=d_out) * 0.3])
    return W, b


def oracle_layer(H, Adj, W, b, K):
    """Layer assembled from general-purpose primitives, row by row."""
    d_out = W.shape[0] - 1
    o = origin(K, d_out)
    rows = [mobius_add_bias(mobius_matvec(W, h, K), b, K) for h in H]
    tangent = torch.stack([log_map(o, r, K) for r in rows])
    agg = torch.as_tensor(Adj) @ tangent
    act = torch.clamp(agg, min=0.0)
    return torch.stack([exp_map(o, a, K) for a in act])


def tiny_model(mode="full", d=5, h=4, layers=1, seed=0, K=2.5):
    return HCADModel(d, ModelConfig(hidden_dim=h, num_layers=layers, curvature=K, mode=mode), seed=seed)


# layer ---------------------------------------------------------------------------


def test_layer_origin_fixed_point():
    K = 1.0
    H = origin(K, 3).expand(4, 4)
    out = hgcn_layer(H, torch.eye(4, dtype=T), torch.eye(4, dtype=T), torch.zeros(4, dtype=T), K)
    assert torch.equal(out, H)


def test_layer_single_node():
    rng = np.random.default_rng(0)
    K = 2.5
    W, b = rand_params(rng, 3, 4)
    h = lift_feature(rng.normal(size=(1, 3)), K)
    expected = exp_map(origin(K, 4), torch.relu(log_map(origin(K, 4), mobius_add_bias(mobius_matvec(W, h[0], K), b, K), K)), K)
    out = hgcn_layer(h, torch.ones(1, 1, dtype=T), W, b, K)
    assert torch.allclose(out[0], expected, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_layer_compositional_oracle(seed):
    rng = np.random.default_rng(seed)
    K = [0.5, 1.0, 2.5][seed % 3]
    W, b = rand_params(rng, 3, 4)
    H = lift_feature(rng.normal(size=(3, 3)), K)
    A = rng.integers(0, 2, size=(3, 3))
    A = np.triu(A, 1)
    Adj = torch.as_tensor(normalize_dense_or_sparse(A + A.T))
    out = hgcn_layer(H, Adj, W, b, K)
    assert torch.allclose(out, oracle_layer(H, Adj, W, b, K), atol=1e-9, rtol=0)


def test_layer_shape_error():
    K = 1.0
    H = lift_feature(torch.zeros(3, 2, dtype=T), K)
    W, b = rand_params(np.random.default_rng(0), 2, 2)
    with pytest.raises(DimensionError):
        hgcn_layer(H, torch.eye(2, dtype=T), W, b, K)


def test_dropout_only_in_training():
    rng = np.random.default_rng(1)
    K = 1.0
    W, b = rand_params(rng, 3, 6)
    H = lift_feature(rng.normal(size=(4, 3)), K)
    Adj = torch.eye(4, dtype=T)
    base = hgcn_layer(H, Adj, W, b, K, dropout=0.5, training=False)
    assert torch.equal(base, hgcn_layer(H, Adj, W, b, K))
    g1 = torch.Generator().manual_seed(3)
    dropped = hgcn_layer(H, Adj, W, b, K, dropout=0.5, training=True, generator=g1)
    assert not torch.equal(base, dropped)
    assert float(membership_error(dropped, K).max()) <= 1e-7
    g2 = torch.Generator().manual_seed(3)
    assert torch.equal(dropped, hgcn_layer(H, Adj, W, b, K, dropout=0.5, training=True, generator=g2))


# encoder / decoder -------------------------------------------------------------------


def test_zero_attributes_well_defined():
    m = tiny_model()
    H = m.encode(torch.zeros(3, 5, dtype=T), torch.eye(3, dtype=T))
    assert torch.isfinite(H).all()
    assert float(membership_error(H.detach(), m.K).max()) <= 1e-7


@given(seed=st.integers(0, 10_000), layers=st.integers(1, 3), K=st.sampled_from([0.5, 1.0, 2.5]))
def test_encoder_membership(seed, layers, K):
    rng = np.random.default_rng(seed)
    m = tiny_model(layers=layers, seed=seed, K=K)
    trace = []
    X = torch.as_tensor(rng.normal(size=(4, 5)))
    Adj = torch.as_tensor(normalize_dense_or_sparse(np.ones((4, 4)) - np.eye(4)))
    H = lift_feature(X, K)
    for W, b in zip(m.weights, m.biases):
        H = hgcn_layer(H, Adj, W, b, K, trace=trace)
        assert float(membership_error(H.detach(), K).max()) <= 1e-7
    assert len(trace) == layers


def test_euclidean_mode_matches_plain_gcn():
    rng = np.random.default_rng(4)
    m = tiny_model(mode="euclidean", layers=2)
    X = rng.normal(size=(4, 5))
    A = np.array([[0, 1, 0, 0], [1, 0, 1, 1], [0, 1, 0, 0], [0, 1, 0, 0]], dtype=float)
    deg = A.sum(1) + 1
    Adj = (A + np.eye(4)) / np.sqrt(np.outer(deg, deg))
    H = np.c_[np.zeros(4), X]
    for W, b in zip(m.weights, m.biases):
        W, b = W.detach().numpy(), b.detach().numpy().copy()
        pre = Adj @ H @ W.T + b
        pre[:, 0] = 0.0
        H = np.maximum(pre, 0.0)
    expected = H @ m.dec_W.detach().numpy().T + m.dec_b.detach().numpy()
    got = m.decode(m.encode(torch.as_tensor(X), torch.as_tensor(Adj)))
    np.testing.assert_allclose(got.detach().numpy(), expected, atol=1e-9, rtol=0)


def test_decode_at_origin_is_bias():
    K = 2.5
    W = torch.as_tensor(np.random.default_rng(0).normal(size=(3, 5)))
    b = torch.tensor([0.1, -0.2, 0.3], dtype=T)
    out = decode_tangent(origin(K, 4).expand(2, 5), W, b, K)
    assert torch.allclose(out, b.expand(2, 3), atol=1e-15)


def test_decode_selector_recovers_tangent():
    K = 1.0
    u = torch.tensor([[0.0, 0.3, -1.2]], dtype=T)
    h = exp_map(origin(K, 2), u[0], K).unsqueeze(0)
    W = torch.tensor([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], dtype=T)
    out = decode_tangent(h, W, torch.zeros(2, dtype=T), K)
    assert torch.allclose(out, u[:, 1:], atol=1e-12)


def test_decode_compositional_oracle():
    rng = np.random.default_rng(5)
    K = 0.5
    W = torch.as_tensor(rng.normal(size=(3, 4)))
    b = torch.as_tensor(rng.normal(size=3))
    H = lift_feature(rng.normal(size=(6, 3)), K)
    o = origin(K, 3)
    expected = torch.stack([W @ log_map(o, h, K) + b for h in H])
    assert torch.allclose(decode_tangent(H, W, b, K), expected, atol=1e-10)


def test_readout_examples():
    assert readout(torch.tensor([[1.0, 2.0]])).tolist() == [1.0, 2.0]
    assert readout(torch.tensor([[1.0, 0.0], [0.0, 1.0]])).tolist() == [0.5, 0.5]


@given(st.permutations(range(5)))
def test_subgraph_embedding_permutation_invariant(perm):
    rng = np.random.default_rng(6)
    m = tiny_model()
    X = torch.as_tensor(rng.normal(size=(5, 5)))
    A = np.triu(rng.integers(0, 2, size=(5, 5)), 1)
    Adj = torch.as_tensor(normalize_dense_or_sparse(A + A.T))
    p = list(perm)
    a = m.encode_subgraph(X, Adj)
    b = m.encode_subgraph(X[p], Adj[p][:, p])
    assert torch.allclose(a, b, atol=1e-12)


@pytest.mark.parametrize("mode", ["full", "no_decoder", "euclidean"])
def test_target_equals_one_node_subgraph(mode):
    m = tiny_model(mode=mode)
    x = torch.as_tensor(np.random.default_rng(7).normal(size=5))
    pair_path = m.encode_subgraph(x.view(1, 5), torch.ones(1, 1, dtype=T))
    assert torch.equal(m.encode_target(x), pair_path)


def test_target_zero_matches_zero_subgraph():
    m = tiny_model()
    assert torch.equal(m.encode_target(torch.zeros(5, dtype=T)),
                      m.encode_subgraph(torch.zeros(1, 5, dtype=T), torch.ones(1, 1, dtype=T)))


@pytest.mark.parametrize("d", [1, 7, 30])
def test_target_output_length(d):
    m = tiny_model(d=d, h=6)
    assert m.encode_target(torch.ones(d, dtype=T)).shape == (6,)


def test_no_decoder_uses_ambient_coordinates():
    m = tiny_model(mode="no_decoder", h=4)
    assert m.M.shape == (5, 5)
    emb = m.encode_target(torch.ones(5, dtype=T))
    assert float(membership_error(emb.detach(), m.K)) <= 1e-7


# discriminator ---------------------------------------------------------------------------


def test_discriminate_zero_matrix():
    assert float(discriminate(torch.tensor([1.0, 2.0]), torch.tensor([3.0, 4.0]), torch.zeros(2, 2))) == 0.5


def test_discriminate_identity():
    expected = 1.0 / (1.0 + math.exp(-1.0))
    assert expected == pytest.approx(0.7310585786300049, abs=1e-16)
    t = torch.tensor([1.0, 0.0], dtype=T)
    assert float(discriminate(t, t, torch.eye(2, dtype=T))) == pytest.approx(expected, abs=1e-15)


@given(st.integers(0, 10_000))
def test_discriminate_transpose_identity(seed):
    rng = np.random.default_rng(seed)
    t, s = torch.as_tensor(rng.normal(size=3)), torch.as_tensor(rng.normal(size=3))
    M = torch.as_tensor(rng.normal(size=(3, 3)))
    a, b = discriminate(t, s, M), discriminate(s, t, M.T)
    assert float(a) == pytest.approx(float(b), abs=1e-14)
    assert 0.0 < float(a) < 1.0


def test_discriminate_shape_error():
    with pytest.raises(DimensionError):
        discriminate(torch.zeros(2), torch.zeros(3), torch.zeros(2, 2))


# forward / checkpoint ---------------------------------------------------------------------


def test_forward_identical_pairs_identical_scores(small_graph):
    m = HCADModel(small_graph.d, ModelConfig(hidden_dim=8))
    pair = make_pair(small_graph, 3, POSITIVE, RwrConfig())
    twin = InstancePair(pair.target, pair.members, pair.n_distinct, pair.A_sub, pair.X_sub, NEGATIVE)
    q = m(collate([pair, twin], small_graph)).detach()
    assert float(q[0]) == float(q[1])
    assert ((q > 0) & (q < 1)).all()


@pytest.mark.parametrize("mode", ["full", "no_decoder", "euclidean"])
def test_checkpoint_roundtrip(tmp_path, small_graph, mode):
    m = HCADModel(small_graph.d, ModelConfig(hidden_dim=6, num_layers=2, mode=mode, curvature=1.5), seed=4)
    pairs = [make_pair(small_graph, v, pol, RwrConfig()) for v in range(5) for pol in (0, 1)]
    batch = collate(pairs, small_graph)
    m.save(tmp_path / "ck.npz", extra={"note": "x"})
    loaded, meta = HCADModel.load(tmp_path / "ck.npz")
    assert meta["note"] == "x" and meta["seed"] == 4
    assert loaded.cfg == m.cfg
    assert torch.equal(loaded(batch), m(batch))


def test_init_is_seeded_and_bounded():
    a, b = tiny_model(seed=1), tiny_model(seed=1)
    for (n, p), (_, q) in zip(a.named_parameters(), b.named_parameters()):
        assert torch.equal(p, q)
    assert float(a.weights[0].detach().abs().max()) <= 1 / math.sqrt(5)
    assert not torch.equal(a.M, tiny_model(seed=2).M)


@pytest.mark.parametrize("kwargs", [
    dict(hidden_dim=0), dict(num_layers=0), dict(dropout=1.0), dict(curvature=0.0), dict(mode="other"),
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ModelConfig(**kwargs)


def test_padded_members_do_not_add_edges():
    g = from_edges(3, [(1, 2)], np.ones((3, 4)))
    pair = make_pair(g, 0, POSITIVE, RwrConfig(subgraph_size=4))
    batch = collate([pair], g)
    assert torch.equal(batch.A_norm[0], torch.eye(4, dtype=T))
