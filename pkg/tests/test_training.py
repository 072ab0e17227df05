import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from tgcn.kgdata import add_reciprocals, from_labeled
from tgcn.model import ModelConfig, TgcnModel
from tgcn.training import (
    ConfigError,
    StepCounter,
    TrainConfig,
    batch_loss,
    bce_1n_loss,
    embedding_l2_penalty,
    gradient_check,
    lr_at,
    nt_xent_1b_loss,
    train_step,
)

F64 = torch.float64


def naive_bce(scores, targets):
    scores = np.asarray(scores, dtype=np.float64)
    total = 0.0
    for row, t in zip(scores, targets):
        acc = 0.0
        for j, phi in enumerate(row):
            p = 1.0 / (1.0 + math.exp(-phi))
            y = 1.0 if j == t else 0.0
            acc += y * math.log(p) + (1 - y) * math.log(1 - p)
        total += -acc / len(row)
    return total / len(scores)


def test_bce_all_zero_is_ln2():
    assert abs(bce_1n_loss(torch.zeros(3, 7, dtype=F64), [0, 3, 6]).item() - math.log(2)) < 1e-12


def test_bce_saturation():
    s = torch.full((1, 5), -30.0, dtype=F64)
    s[0, 2] = 30.0
    assert bce_1n_loss(s, [2]).item() < 1e-9


def test_bce_matches_naive_formula(rng):
    s = rng.normal(scale=3.0, size=(2, 4))
    got = bce_1n_loss(torch.from_numpy(s), [1, 3]).item()
    assert abs(got - naive_bce(s, [1, 3])) < 1e-7


def test_bce_stable_for_large_scores():
    s = torch.tensor([[1000.0, -1000.0]], dtype=F64)
    assert math.isfinite(bce_1n_loss(s, [1]).item())


def test_bce_target_out_of_range():
    with pytest.raises(IndexError):
        bce_1n_loss(torch.zeros(1, 3), [3])


def test_ntxent_single_candidate():
    assert nt_xent_1b_loss(torch.tensor([[4.2]]), [0], tau=0.7).item() == 0.0


def test_ntxent_two_equal():
    assert abs(nt_xent_1b_loss(torch.zeros(1, 2, dtype=F64), [1]).item() - math.log(2)) < 1e-12


def test_ntxent_rejects_nonpositive_tau():
    with pytest.raises(ConfigError):
        nt_xent_1b_loss(torch.zeros(1, 2), [0], tau=0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), c=st.floats(-50, 50), tau=st.floats(0.1, 5))
def test_ntxent_shift_invariant_and_positive(seed, c, tau):
    g = torch.Generator().manual_seed(seed)
    s = torch.randn(3, 6, dtype=F64, generator=g)
    targets = [0, 2, 5]
    base = nt_xent_1b_loss(s, targets, tau)
    assert abs(nt_xent_1b_loss(s + c, targets, tau).item() - base.item()) < 1e-7
    assert base.item() >= 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(0.01, 5))
def test_ntxent_monotone_in_target_score(seed, bump):
    g = torch.Generator().manual_seed(seed)
    s = torch.randn(1, 5, dtype=F64, generator=g)
    up = s.clone()
    up[0, 1] += bump
    assert nt_xent_1b_loss(up, [1]).item() < nt_xent_1b_loss(s, [1]).item()


def test_ntxent_high_temperature_limit():
    s = torch.tensor([[3.0, -2.0, 0.5, 7.0]], dtype=F64)
    assert abs(nt_xent_1b_loss(s, [0], tau=1e6).item() - math.log(4)) < 1e-3


def test_l2_penalty():
    ent = torch.tensor([[1.0, 2.0], [3.0, 4.0]], dtype=F64)
    rel = torch.zeros(0, 2, dtype=F64)
    assert abs(embedding_l2_penalty(ent, rel, 0.01).item() - 0.30) < 1e-12
    assert embedding_l2_penalty(torch.zeros(3, 2), torch.zeros(2, 2), 0.5).item() == 0.0
    assert embedding_l2_penalty(ent, rel, 0.0).item() == 0.0


def test_lr_schedule():
    cfg = TrainConfig(lr=0.005)
    assert lr_at(0, cfg) == 0.005
    assert lr_at(499, cfg) == 0.005
    assert abs(lr_at(500, cfg) - 0.00475) < 1e-15
    assert abs(lr_at(1250, cfg) - 0.005 * 0.9025) < 1e-15


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(tau=0)
    with pytest.raises(ConfigError):
        TrainConfig(loss="margin")


def ring_kg(n=10):
    rows = [(f"e{i}", "next", f"e{(i + 1) % n}") for i in range(n)]
    rows += [(f"e{i}", "skip", f"e{(i + 2) % n}") for i in range(n)]
    return add_reciprocals(from_labeled(rows))


def small_model(kg, decoder="distmult", nb=None, d=8, dtype="float32"):
    cfg = ModelConfig(num_entities=kg.num_entities, num_relations=kg.num_relations, dim=d, n_b=nb,
                      decoder=decoder, dtype=dtype)
    return TgcnModel(cfg, seed=3)


@pytest.mark.parametrize("loss", ["1n", "1b"])
def test_train_step_deterministic(loss):
    kg = ring_kg()
    runs = []
    for _ in range(2):
        torch.manual_seed(0)
        model = small_model(kg)
        cfg = TrainConfig(loss=loss, g_s=12, lr=0.01, reg_f=0.001)
        opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
        rng = np.random.default_rng(5)
        runs.append([train_step(model, kg, cfg, rng, opt, it) for it in range(10)])
    assert runs[0] == runs[1]


def test_one_b_score_count_uses_batch_entities():
    kg = ring_kg(12)
    model = small_model(kg)
    cfg = TrainConfig(loss="1b", g_s=3)
    counter = StepCounter()
    opt = torch.optim.Adam(model.parameters())
    train_step(model, kg, cfg, np.random.default_rng(0), opt, 0, counter)
    assert counter.last_candidates < kg.num_entities
    assert counter.score_evaluations == counter.last_batch * counter.last_candidates == 3 * counter.last_candidates


def test_one_n_score_count_uses_all_entities():
    kg = ring_kg(12)
    counter = StepCounter()
    model = small_model(kg)
    train_step(model, kg, TrainConfig(loss="1n", g_s=3), np.random.default_rng(0),
               torch.optim.Adam(model.parameters()), 0, counter)
    assert counter.score_evaluations == 3 * kg.num_entities


@pytest.mark.parametrize("loss", ["1n", "1b"])
def test_loss_decreases_on_toy_graph(loss):
    kg = ring_kg(10)
    assert len(kg.train) == 40  # 20 raw triples plus their inverses
    torch.manual_seed(0)
    model = small_model(kg, d=8)
    cfg = TrainConfig(loss=loss, g_s=len(kg.train), lr=0.01, reg_f=0.0)
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(0)
    losses = [train_step(model, kg, cfg, rng, opt, it) for it in range(51)]
    assert losses[-1] < losses[0]


def test_sub_batches_give_same_loss_and_gradients():
    kg = ring_kg(10)
    triples = kg.train[:15]
    grads = []
    losses = []
    for sub_batch in (0, 4):
        model = small_model(kg, decoder="tucker", dtype="float64")
        cfg = TrainConfig(loss="1n", sub_batch=sub_batch, reg_f=0.01)
        model.zero_grad()
        losses.append(batch_loss(model, triples, cfg, kg.num_entities, training=False, backward=True).item())
        grads.append(torch.cat([p.grad.flatten() for p in model.parameters()]))
    assert abs(losses[0] - losses[1]) < 1e-12
    assert torch.allclose(grads[0], grads[1], atol=1e-12)


def test_gradient_check_decoder_only():
    kg = ring_kg(5)
    cfg = ModelConfig(num_entities=kg.num_entities, num_relations=kg.num_relations, dim=3, num_layers=0,
                      decoder="distmult", dtype="float64")
    model = TgcnModel(cfg, seed=0)
    tc = TrainConfig(loss="1n", reg_f=0.01)
    err = gradient_check(model, lambda m: batch_loss(m, kg.train, tc, kg.num_entities, training=False))
    assert err < 1e-6
