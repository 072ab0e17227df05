"""Filtered link-prediction ranking with random tie breaking."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .encoder import build_edge_index
from .kgdata import KnowledgeGraph, full_graph
from .model import count_parameters

HITS_AT = (1, 3, 10)
TARGET_SIDE = "target"
SOURCE_SIDE = "source"  # answered through the inverse relation


def filtered_rank(scores, true_target: int, filter_set, rng: np.random.Generator) -> int:
    """1-based rank of ``true_target`` among non-filtered candidates.

    Equivalent to shuffling the candidates and stable-sorting by descending
    score: the target lands uniformly among the candidates it ties with.
    """
    scores = np.asarray(scores)
    n = len(scores)
    if not 0 <= true_target < n:
        raise IndexError(f"target {true_target} outside [0, {n})")
    keep = np.ones(n, dtype=bool)
    if filter_set:
        keep[np.fromiter(filter_set, dtype=np.int64)] = False
    keep[true_target] = False
    target = scores[true_target]
    higher = int(np.count_nonzero(scores[keep] > target))
    tied = int(np.count_nonzero(scores[keep] == target))
    return 1 + higher + int(rng.integers(0, tied + 1))


def rank_batch(scores: torch.Tensor, targets: torch.Tensor, filter_mask: torch.Tensor,
               rng: np.random.Generator) -> np.ndarray:
    """Vectorized :func:`filtered_rank` over rows. ``filter_mask`` marks excluded candidates."""
    rows = torch.arange(len(targets))
    target_scores = scores[rows, targets].unsqueeze(1)
    keep = ~filter_mask
    keep[rows, targets] = False
    higher = ((scores > target_scores) & keep).sum(1).numpy()
    tied = ((scores == target_scores) & keep).sum(1).numpy()
    return 1 + higher + rng.integers(0, tied + 1)


@dataclass
class RankingReport:
    per_query: list = field(default_factory=list)  # (s, r, t, side, rank)
    mrr: float = 0.0
    hits: dict = field(default_factory=dict)
    protocol: str = "random"
    seed: int = 0
    valid: bool = True
    dataset: str = ""
    split: str = ""
    nfp: int = 0
    efp: int = 0

    @property
    def n_queries(self) -> int:
        return len(self.per_query)

    @property
    def ranks(self) -> np.ndarray:
        return np.array([q[-1] for q in self.per_query], dtype=np.int64)

    def to_record(self) -> dict:
        return {
            "dataset": self.dataset,
            "split": self.split,
            "seed": self.seed,
            "n_queries": self.n_queries,
            "mrr": self.mrr,
            "hits1": self.hits.get(1, 0.0),
            "hits3": self.hits.get(3, 0.0),
            "hits10": self.hits.get(10, 0.0),
            "nfp": self.nfp,
            "efp": self.efp,
        }


def metrics_from_ranks(ranks) -> tuple[float, dict]:
    ranks = np.asarray(ranks, dtype=np.float64)
    if len(ranks) == 0:
        return 0.0, {k: 0.0 for k in HITS_AT}
    if ranks.min() < 1:
        raise ValueError("ranks are 1-based")
    return float(np.mean(1.0 / ranks)), {k: float(np.mean(ranks <= k)) for k in HITS_AT}


def ranking_queries(kg: KnowledgeGraph, split: str) -> np.ndarray:
    """``(s, r, t, side)`` rows: each raw triple asked forward and through its inverse."""
    if not kg.augmented:
        raise ValueError("evaluation needs a graph with reciprocal relations")
    raw = kg.raw_triples(split)
    fwd = np.column_stack([raw, np.zeros(len(raw), dtype=np.int64)])
    inv = np.column_stack([raw[:, 2], raw[:, 1] + kg.num_raw_relations, raw[:, 0], np.ones(len(raw), dtype=np.int64)])
    out = np.empty((2 * len(raw), 4), dtype=np.int64)
    out[0::2], out[1::2] = fwd, inv
    return out


@torch.no_grad()
def all_scores(model, kg: KnowledgeGraph, queries: np.ndarray, H: torch.Tensor | None = None) -> torch.Tensor:
    """Score each ``(s, r)`` query against every entity, encoding over the whole training graph."""
    if H is None:
        H = model.encode(build_edge_index(full_graph(kg), nodes=np.arange(kg.num_entities)), training=False)
    q = torch.as_tensor(queries[:, :2])
    return model.decoder.score_all_targets(H[q[:, 0]], model.relation[q[:, 1]], H)


@torch.no_grad()
def evaluate(model, kg: KnowledgeGraph, split: str = "test", seed: int = 0, batch_size: int = 256) -> RankingReport:
    nfp, efp = count_parameters(model)
    rng = np.random.default_rng(seed)
    queries = ranking_queries(kg, split)
    report = RankingReport(seed=seed, dataset=kg.name, split=split, nfp=nfp, efp=efp)
    if len(queries) == 0:
        report.valid = False
        report.hits = {k: 0.0 for k in HITS_AT}
        return report
    was_training = model.training
    model.eval()
    H = model.encode(build_edge_index(full_graph(kg), nodes=np.arange(kg.num_entities)), training=False)
    for start in range(0, len(queries), batch_size):
        chunk = queries[start:start + batch_size]
        scores = all_scores(model, kg, chunk, H)
        mask = torch.zeros(scores.shape, dtype=torch.bool)
        for i, (s, r, _, _) in enumerate(chunk.tolist()):
            known = kg.known_targets(s, r)
            if known:
                mask[i, list(known)] = True
        ranks = rank_batch(scores, torch.as_tensor(chunk[:, 2]), mask, rng)
        for (s, r, t, side), rank in zip(chunk.tolist(), ranks.tolist()):
            report.per_query.append((s, r, t, SOURCE_SIDE if side else TARGET_SIDE, int(rank)))
    model.train(was_training)
    report.mrr, report.hits = metrics_from_ranks(report.ranks)
    return report
