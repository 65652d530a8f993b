import math

import mpmath as mp
import numpy as np
import pytest
import torch

from hcad.model import HCADModel, ModelConfig, collate
from hcad.sampler import NEGATIVE, POSITIVE, InstancePair, RwrConfig, make_pair, sample_epoch
from hcad.synthetic import community_graph
from hcad.train import (
    LossStats,
    TrainConfig,
    TrainingError,
    adam_step,
    bce_loss,
    compute_gradients,
    gradient_check,
    train_loop,
)

T = torch.float64


def small_batch(g, c=3, n_pairs=2, seed=0):
    cfg = RwrConfig(subgraph_size=c, seed=seed)
    pairs = sample_epoch(g, cfg)[:n_pairs]
    return collate(pairs, g)


# loss -----------------------------------------------------------------------------


def test_bce_symmetric_point():
    assert float(bce_loss([0.5], [1])) == pytest.approx(math.log(2), abs=1e-15)


def test_bce_perfect_prediction_tends_to_zero():
    vals = [float(bce_loss([1 - 10.0**-k], [1])) for k in (2, 4, 6)]
    assert vals[0] > vals[1] > vals[2] >= 0
    assert vals[2] < 1e-5


def test_bce_worked_batch():
    mp.mp.dps = 40
    exact = -(mp.log(mp.mpf("0.9")) + mp.log(mp.mpf("0.8")))
    assert float(bce_loss([0.9, 0.2], [1, 0])) == pytest.approx(float(exact), abs=1e-14)
    assert float(exact) == pytest.approx(0.3285, abs=5e-5)


def test_bce_clamps_and_counts():
    stats = LossStats()
    val = float(bce_loss([0.0, 1.0, 0.5], [1, 0, 1], stats=stats))
    assert stats.saturation_events == 2
    assert math.isfinite(val)
    assert val == pytest.approx(-2 * math.log(1e-7) + math.log(2), rel=1e-6)


def test_bce_reductions():
    q, y = [0.9, 0.2, 0.6], [1, 0, 0]
    per = bce_loss(q, y, reduction="none")
    assert float(bce_loss(q, y, reduction="mean")) == pytest.approx(float(per.mean()))
    assert float(bce_loss(q, y)) == pytest.approx(float(per.sum()))
    with pytest.raises(ValueError):
        bce_loss(q, y, reduction="max")


# gradients -------------------------------------------------------------------------


def test_gradient_of_bilinear_at_zero_matches_outer_product():
    g = community_graph(n=20, communities=2, d=6, avg_degree=3, seed=1)
    model = HCADModel(g.d, ModelConfig(hidden_dim=2), seed=0)
    with torch.no_grad():
        model.M.zero_()
    batch = small_batch(g, c=3, n_pairs=4)
    _, grads = compute_gradients(model, batch)
    with torch.no_grad():
        t = model.encode_target(batch.x_target)
        s = model.encode_subgraph(batch.X_sub, batch.A_norm)
    # dL/dM = mean_i (q_i - y_i) t_i s_i^T with q_i = 1/2
    expected = sum((0.5 - float(batch.labels[i])) * torch.outer(t[i], s[i]) for i in range(4)) / 4
    assert torch.allclose(grads["M"], expected, atol=1e-14)
    assert grads["M"].shape == (2, 2)


def test_symmetric_batch_has_zero_gradient(small_graph):
    model = HCADModel(small_graph.d, ModelConfig(hidden_dim=4), seed=0)
    with torch.no_grad():
        model.M.zero_()
    pos = make_pair(small_graph, 2, POSITIVE, RwrConfig())
    neg = InstancePair(pos.target, pos.members, pos.n_distinct, pos.A_sub, pos.X_sub, NEGATIVE)
    loss, grads = compute_gradients(model, collate([pos, neg], small_graph))
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    for name, gr in grads.items():
        assert float(gr.abs().max()) <= 1e-15, name


def test_non_finite_gradient_names_parameter(small_graph):
    model = HCADModel(small_graph.d, ModelConfig(hidden_dim=4), seed=0)
    with torch.no_grad():
        model.dec_b[0] = float("nan")
    with pytest.raises(TrainingError, match="dec_b|M|dec_W"):
        compute_gradients(model, small_batch(small_graph))


@pytest.mark.parametrize("mode", ["full", "no_decoder", "euclidean"])
def test_gradient_check(mode):
    g = community_graph(n=20, communities=2, d=32, avg_degree=3, topic_prob=0.5, seed=3)
    model = HCADModel(g.d, ModelConfig(hidden_dim=3, mode=mode), seed=1)
    batch = small_batch(g, c=3, n_pairs=2, seed=1)
    report = gradient_check(model, batch, n_coords=100)
    assert report.coordinates_checked >= 100
    assert report.passed, report


# optimizer ---------------------------------------------------------------------------


def scalar_param(v=1.0):
    return {"theta": torch.nn.Parameter(torch.tensor([v], dtype=T))}


def test_adam_zero_gradient_no_decay_is_noop():
    p = scalar_param()
    adam_step(p, {"theta": torch.zeros(1, dtype=T)}, None, TrainConfig(weight_decay=0.0))
    assert p["theta"].item() == 1.0


def test_adam_zero_gradient_decay_only_shrinks():
    p = scalar_param()
    adam_step(p, {"theta": torch.zeros(1, dtype=T)}, None, TrainConfig(weight_decay=0.01))
    assert 0.0 < p["theta"].item() < 1.0


def test_adam_first_step():
    p = scalar_param()
    cfg = TrainConfig(lr=0.03, weight_decay=0.0)
    adam_step(p, {"theta": torch.ones(1, dtype=T)}, None, cfg)
    # m_hat = 1, v_hat = 1 after bias correction
    assert p["theta"].item() == pytest.approx(1 - 0.03 / (1 + 1e-8), abs=1e-15)


def test_adam_two_steps_hand_recurrence():
    p = scalar_param()
    cfg = TrainConfig(lr=0.1, weight_decay=0.05)
    theta, m, v = 1.0, 0.0, 0.0
    state = None
    for t, g in enumerate([0.4, -0.3], start=1):
        state = adam_step(p, {"theta": torch.tensor([g], dtype=T)}, state, cfg)
        g = g + 0.05 * theta
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        theta -= 0.1 * (m / (1 - 0.9**t)) / (math.sqrt(v / (1 - 0.999**t)) + 1e-8)
    assert p["theta"].item() == pytest.approx(theta, abs=1e-14)


def test_adam_deterministic_and_order_invariant():
    def run(order):
        params = {k: torch.nn.Parameter(torch.tensor([1.0, -2.0], dtype=T)) for k in "abc"}
        grads = {k: torch.tensor([0.3, 0.1 * i], dtype=T) for i, k in enumerate("abc")}
        state = None
        for _ in range(3):
            state = adam_step(params, {k: grads[k] for k in order}, state, TrainConfig())
        return {k: params[k].detach().clone() for k in "abc"}

    a, b = run("abc"), run("cab")
    for k in "abc":
        assert torch.equal(a[k], b[k])


def test_adam_mismatched_gradients():
    with pytest.raises(KeyError):
        adam_step(scalar_param(), {"other": torch.zeros(1, dtype=T)}, None, TrainConfig())


@pytest.mark.parametrize("kwargs", [dict(epochs=0), dict(lr=0.0), dict(beta1=1.0), dict(beta2=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


# loop ------------------------------------------------------------------------------------


def _sanity_run(seed):
    g = community_graph(n=20, communities=2, d=8, avg_degree=3, seed=seed)
    res = train_loop(g, ModelConfig(hidden_dim=16, dropout=0.0), TrainConfig(epochs=10, lr=0.03, seed=seed),
                     RwrConfig(seed=seed))
    return [r.mean_loss for r in res.trace]


def test_loss_decreases_on_small_graphs():
    ok = 0
    for seed in range(5):
        losses = _sanity_run(seed)
        assert all(v >= 0 for v in losses)
        ok += all(b < a for a, b in zip(losses[:5], losses[1:5]))
    assert ok >= 4


def test_training_is_deterministic():
    assert _sanity_run(3) == _sanity_run(3)


def test_training_ignores_labels(small_graph):
    cfgs = (ModelConfig(hidden_dim=4, dropout=0.2), TrainConfig(epochs=2, batch_size=16))
    a = train_loop(small_graph, *cfgs)
    labelled = small_graph.with_(labels=np.arange(small_graph.n) % 2)
    b = train_loop(labelled, *cfgs)
    assert [r.mean_loss for r in a.trace] == [r.mean_loss for r in b.trace]


def test_on_epoch_callback(small_graph):
    seen = []
    train_loop(small_graph, ModelConfig(hidden_dim=4), TrainConfig(epochs=3), on_epoch=seen.append)
    assert [r.epoch for r in seen] == [0, 1, 2]
