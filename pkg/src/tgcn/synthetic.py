"""Synthetic clustered knowledge graphs for smoke tests and desk-scale runs."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .kgdata import KnowledgeGraph, from_labeled


def make_clustered_kg(num_entities: int = 200, num_relations: int = 6, cluster_size: int = 4,
                      holdout: float = 0.1, seed: int = 0) -> KnowledgeGraph:
    """Entities fall in clusters; each relation pairs clusters by a random matching.

    Every entity is linked under relation ``r`` to all members of its
    partner cluster, so a held-out edge is recoverable from its siblings.
    ``holdout`` of the edges go to each of valid and test.
    """
    if num_entities % cluster_size:
        raise ValueError("num_entities must be a multiple of cluster_size")
    rng = np.random.default_rng(seed)
    n_clusters = num_entities // cluster_size
    if n_clusters % 2:
        raise ValueError("need an even number of clusters")
    members = rng.permutation(num_entities).reshape(n_clusters, cluster_size)
    triples = []
    for r in range(num_relations):
        perm = rng.permutation(n_clusters).reshape(-1, 2)
        partner = np.empty(n_clusters, dtype=np.int64)
        partner[perm[:, 0]], partner[perm[:, 1]] = perm[:, 1], perm[:, 0]
        for c in range(n_clusters):
            for s in members[c]:
                for t in members[partner[c]]:
                    triples.append((f"e{s}", f"r{r}", f"e{t}"))
    order = rng.permutation(len(triples))
    n_hold = int(round(holdout * len(triples)))
    valid = [triples[i] for i in order[:n_hold]]
    test = [triples[i] for i in order[n_hold:2 * n_hold]]
    train = [triples[i] for i in order[2 * n_hold:]]
    return from_labeled(train, valid, test, name="synthetic")


def write_dataset(kg: KnowledgeGraph, directory) -> Path:
    """Write ``train.txt``/``valid.txt``/``test.txt`` with labels."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for split in ("train", "valid", "test"):
        with (d / f"{split}.txt").open("w", encoding="utf-8") as fh:
            for s, r, t in kg.split(split).tolist():
                fh.write(f"{kg.entities[s]}\t{kg.relations[r]}\t{kg.entities[t]}\n")
    return d
