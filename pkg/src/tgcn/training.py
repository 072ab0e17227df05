"""Losses, learning-rate schedule, the training loop and gradient verification."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch
from torch.nn import functional as F

from .encoder import build_edge_index
from .evaluation import evaluate
from .kgdata import KnowledgeGraph, Subgraph, sample_subgraph
from .model import TgcnModel

log = logging.getLogger(__name__)

ONE_N = "1n"
ONE_B = "1b"


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    loss: str = ONE_N
    tau: float = 1.0
    lr: float = 0.005
    decay: float = 0.95
    decay_period: int = 500
    reg_f: float = 0.01
    g_s: int = 90000
    max_iterations: int = 10000
    eval_period: int = 500
    patience: int = 20
    sub_batch: int = 0
    seed: int = 0

    def __post_init__(self):
        self.loss = self.loss.lower()
        if self.loss not in (ONE_N, ONE_B):
            raise ConfigError(f"loss must be '1n' or '1b', got {self.loss!r}")
        if not self.tau > 0:
            raise ConfigError(f"temperature must be > 0, got {self.tau}")
        if not self.lr > 0:
            raise ConfigError(f"learning rate must be > 0, got {self.lr}")
        if not 0 < self.decay <= 1:
            raise ConfigError(f"decay must be in (0, 1], got {self.decay}")
        if self.g_s < 1:
            raise ConfigError(f"g_s must be >= 1, got {self.g_s}")


def bce_1n_loss(scores: torch.Tensor, targets) -> torch.Tensor:
    """Mean binary cross entropy of each row against a one-hot target."""
    targets = torch.as_tensor(targets, dtype=torch.long)
    n = scores.shape[-1]
    if len(targets) and (targets.min() < 0 or targets.max() >= n):
        raise IndexError(f"target ids must lie in [0, {n})")
    labels = F.one_hot(targets, n).to(scores.dtype)
    return F.binary_cross_entropy_with_logits(scores, labels)


def nt_xent_1b_loss(scores: torch.Tensor, targets, tau: float = 1.0) -> torch.Tensor:
    """Softmax cross entropy at temperature ``tau`` over each row's candidates."""
    if not tau > 0:
        raise ConfigError(f"temperature must be > 0, got {tau}")
    targets = torch.as_tensor(targets, dtype=torch.long)
    return F.cross_entropy(scores / tau, targets)


def embedding_l2_penalty(entity: torch.Tensor, relation: torch.Tensor, reg_f: float) -> torch.Tensor:
    if reg_f == 0:
        return entity.new_zeros(())
    return reg_f * (entity.pow(2).sum() + relation.pow(2).sum())


def lr_at(iteration: int, config: TrainConfig) -> float:
    return config.lr * config.decay ** (iteration // config.decay_period)


@dataclass
class StepCounter:
    """Instrumentation: how many (query, candidate) scores were evaluated."""

    score_evaluations: int = 0
    steps: int = 0
    last_batch: int = 0
    last_candidates: int = 0


def batch_loss(model: TgcnModel, triples: np.ndarray, config: TrainConfig, num_entities: int,
               training: bool = True, counter: StepCounter | None = None,
               backward: bool = False) -> torch.Tensor:
    """Encode the subgraph formed by ``triples`` and score each of them.

    OneN ranks every target against all entities; OneB only against the
    unique entities of the batch. Includes the embedding penalty.
    If ``backward`` is set, gradients are accumulated chunk by chunk.
    """
    sub = Subgraph(triples)
    nodes = np.arange(num_entities) if config.loss == ONE_N else sub.active_entities
    edges = build_edge_index(sub, nodes=nodes)
    H = model.encode(edges, training=training)
    src = edges.src
    dst = edges.dst
    rel = edges.rel
    chunk = config.sub_batch if config.sub_batch > 0 else len(triples)
    total = H.new_zeros(())
    batches = list(range(0, len(triples), chunk))
    for i, start in enumerate(batches):
        sl = slice(start, start + chunk)
        scores = model.decoder.score_all_targets(H[src[sl]], model.relation[rel[sl]], H, training=training)
        if counter is not None:
            counter.score_evaluations += scores.numel()
        if config.loss == ONE_N:
            part = bce_1n_loss(scores, dst[sl])
        else:
            part = nt_xent_1b_loss(scores, dst[sl], config.tau)
        part = part * (scores.shape[0] / len(triples))
        if backward:
            part.backward(retain_graph=i < len(batches) - 1)
        total = total + part.detach() if backward else total + part
    penalty = embedding_l2_penalty(model.entity, model.relation, config.reg_f)
    if backward and penalty.requires_grad:
        penalty.backward()
    if counter is not None:
        counter.last_batch = len(triples)
        counter.last_candidates = H.shape[0]
        counter.steps += 1
    return total + (penalty.detach() if backward else penalty)


def train_step(model: TgcnModel, kg: KnowledgeGraph, config: TrainConfig, rng: np.random.Generator,
               optimizer: torch.optim.Optimizer, iteration: int,
               counter: StepCounter | None = None) -> float:
    """Sample a subgraph, take one Adam step at ``lr_at(iteration)``; returns the loss."""
    sub = sample_subgraph(kg, config.g_s, rng)
    for group in optimizer.param_groups:
        group["lr"] = lr_at(iteration, config)
    optimizer.zero_grad(set_to_none=True)
    loss = batch_loss(model, sub.triples, config, kg.num_entities, training=True, counter=counter, backward=True)
    optimizer.step()
    return float(loss)


@dataclass
class TrainResult:
    losses: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (iteration, lr, train loss, valid mrr)
    best_mrr: float = -1.0
    best_iteration: int = -1
    best_state: dict | None = None
    iterations: int = 0


def fit(model: TgcnModel, kg: KnowledgeGraph, config: TrainConfig,
        on_eval: Callable | None = None, eval_split: str = "valid") -> TrainResult:
    """Train with periodic validation and early stopping on validation MRR.

    Deterministic for a fixed ``config.seed``: sampling uses a numpy
    generator and dropout the torch global generator, both seeded here.
    """
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    result = TrainResult()
    stale = 0
    window = []
    for it in range(config.max_iterations):
        model.train()
        loss = train_step(model, kg, config, rng, optimizer, it)
        if not math.isfinite(loss):
            raise FloatingPointError(f"loss diverged at iteration {it}")
        result.losses.append(loss)
        window.append(loss)
        result.iterations = it + 1
        last = it + 1 == config.max_iterations
        if config.eval_period > 0 and ((it + 1) % config.eval_period == 0 or last):
            report = evaluate(model, kg, eval_split, seed=config.seed)
            mean_loss = float(np.mean(window))
            window = []
            entry = (it + 1, lr_at(it, config), mean_loss, report.mrr)
            result.evals.append(entry)
            log.info("iter %d lr %.6g loss %.6f valid_mrr %.4f", *entry)
            if on_eval is not None:
                on_eval(entry, model)
            if report.mrr > result.best_mrr:
                result.best_mrr = report.mrr
                result.best_iteration = it + 1
                result.best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
                if config.patience and stale >= config.patience:
                    log.info("early stop at iteration %d", it + 1)
                    break
    return result


def _flat_params(model):
    return [(n, p) for n, p in model.named_parameters() if p.requires_grad]


def gradient_check(model: TgcnModel, loss_fn: Callable[[TgcnModel], torch.Tensor],
                   step: float = 1e-4, floor: float = 1e-6) -> float:
    """Max elementwise relative error between autograd and central differences.

    ``loss_fn(model)`` must be deterministic (no dropout). The relative error
    of an entry is ``|a - n| / max(|a|, |n|, floor)``.
    """
    model.zero_grad(set_to_none=True)
    loss_fn(model).backward()
    analytic = {n: p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)
                for n, p in _flat_params(model)}
    worst = 0.0
    with torch.no_grad():
        for name, p in _flat_params(model):
            flat = p.view(-1)
            a = analytic[name].view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + step
                up = loss_fn(model).item()
                flat[i] = orig - step
                down = loss_fn(model).item()
                flat[i] = orig
                num = (up - down) / (2 * step)
                ai = a[i].item()
                err = abs(ai - num) / max(abs(ai), abs(num), floor)
                worst = max(worst, err)
    return worst
