"""Triple datasets: loading, vocabularies, filter index, reciprocals and subgraph sampling."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SPLITS = ("train", "valid", "test")

# Benchmark statistics (entities, raw relations, train, valid, test).
DATASET_STATS = {
    "fb15k-237": (14541, 237, 272115, 17535, 20466),
    "wn18rr": (40943, 11, 86835, 3034, 3134),
}

INVERSE_SUFFIX = "_inverse"


class DatasetError(ValueError):
    """Raised for unreadable or inconsistent triple files."""


class AugmentationError(RuntimeError):
    """Raised when reciprocal triples are added twice."""


def _as_triples(rows) -> np.ndarray:
    arr = np.asarray(rows, dtype=np.int64)
    return arr.reshape(-1, 3)


def _dedupe(triples: np.ndarray) -> np.ndarray:
    if len(triples) == 0:
        return triples
    _, first = np.unique(triples, axis=0, return_index=True)
    return triples[np.sort(first)]


def build_filter_index(splits: Iterable[np.ndarray]) -> dict[tuple[int, int], frozenset]:
    index: dict[tuple[int, int], set] = defaultdict(set)
    for triples in splits:
        for s, r, t in triples.tolist():
            index[(s, r)].add(t)
    return {k: frozenset(v) for k, v in index.items()}


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Immutable triple store with entity/relation vocabularies.

    Triples are ``(n, 3)`` int64 arrays of ``(source, relation, target)`` ids.
    ``filter_index`` maps ``(source, relation)`` to every known target over all
    three splits.
    """

    entities: tuple[str, ...]
    relations: tuple[str, ...]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    augmented: bool = False
    num_raw_relations: int = -1
    name: str = ""
    filter_index: dict = field(init=False, repr=False)

    def __post_init__(self):
        for split in SPLITS:
            arr = _as_triples(getattr(self, split))
            arr.setflags(write=False)
            object.__setattr__(self, split, arr)
            if len(arr):
                if arr[:, [0, 2]].max() >= len(self.entities) or arr[:, 1].max() >= len(self.relations):
                    raise DatasetError(f"{split} split references ids outside the vocabulary")
                if arr.min() < 0:
                    raise DatasetError(f"{split} split holds negative ids")
        if self.num_raw_relations < 0:
            object.__setattr__(self, "num_raw_relations", len(self.relations))
        object.__setattr__(self, "filter_index", build_filter_index(self.splits()))

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def splits(self) -> list[np.ndarray]:
        return [self.train, self.valid, self.test]

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def inverse_of(self, relation: int) -> int:
        if not self.augmented:
            raise AugmentationError("graph has no inverse relations")
        k = self.num_raw_relations
        return relation + k if relation < k else relation - k

    def known_targets(self, source: int, relation: int) -> frozenset:
        return self.filter_index.get((source, relation), frozenset())

    def raw_triples(self, name: str) -> np.ndarray:
        """Triples of a split whose relation is not an inverse."""
        arr = self.split(name)
        return arr[arr[:, 1] < self.num_raw_relations]


def read_triples(path: str | Path) -> list[tuple[str, str, str]]:
    path = Path(path)
    rows = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            rows.append((parts[0], parts[1], parts[2]))
    return rows


def from_labeled(
    train: Sequence[tuple[str, str, str]],
    valid: Sequence[tuple[str, str, str]] = (),
    test: Sequence[tuple[str, str, str]] = (),
    name: str = "",
) -> KnowledgeGraph:
    """Build a graph from string triples, ids assigned in first-appearance order."""
    if len(train) == 0:
        raise DatasetError("training split is empty")
    ent: dict[str, int] = {}
    rel: dict[str, int] = {}

    def encode(rows):
        out = []
        for s, r, t in rows:
            out.append((ent.setdefault(s, len(ent)), rel.setdefault(r, len(rel)), ent.setdefault(t, len(ent))))
        return _dedupe(_as_triples(out))

    tr, va, te = encode(train), encode(valid), encode(test)
    return KnowledgeGraph(tuple(ent), tuple(rel), tr, va, te, name=name)


def load_dataset(train_path, valid_path, test_path, name: str = "") -> KnowledgeGraph:
    rows = [read_triples(p) for p in (train_path, valid_path, test_path)]
    if not rows[0]:
        raise DatasetError(f"{train_path}: training split is empty")
    return from_labeled(*rows, name=name)


def load_dataset_dir(directory, name: str = "") -> KnowledgeGraph:
    d = Path(directory)
    return load_dataset(d / "train.txt", d / "valid.txt", d / "test.txt", name=name or d.name)


def add_reciprocals(kg: KnowledgeGraph) -> KnowledgeGraph:
    """Append ``(t, r + |R|, s)`` for every ``(s, r, t)`` in every split."""
    if kg.augmented:
        raise AugmentationError("graph already holds reciprocal triples")
    k = kg.num_relations

    def aug(arr):
        if len(arr) == 0:
            return arr
        inv = np.stack([arr[:, 2], arr[:, 1] + k, arr[:, 0]], axis=1)
        return _dedupe(np.concatenate([arr, inv]))

    relations = kg.relations + tuple(r + INVERSE_SUFFIX for r in kg.relations)
    return KnowledgeGraph(
        kg.entities, relations, aug(kg.train), aug(kg.valid), aug(kg.test),
        augmented=True, num_raw_relations=k, name=kg.name,
    )


@dataclass(frozen=True, eq=False)
class Subgraph:
    """A set of training triples viewed as directed in-edges ``source -r-> target``."""

    triples: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "triples", _as_triples(self.triples))

    @property
    def sources(self) -> np.ndarray:
        return self.triples[:, 0]

    @property
    def rels(self) -> np.ndarray:
        return self.triples[:, 1]

    @property
    def targets(self) -> np.ndarray:
        return self.triples[:, 2]

    @property
    def active_entities(self) -> np.ndarray:
        return np.unique(self.triples[:, [0, 2]])

    @property
    def adjacency(self) -> dict[int, list[tuple[int, int]]]:
        adj: dict[int, list[tuple[int, int]]] = defaultdict(list)
        for s, r, t in self.triples.tolist():
            adj[t].append((s, r))
        return dict(adj)

    def __len__(self):
        return len(self.triples)


def sample_subgraph(kg: KnowledgeGraph, g_s: int, rng: np.random.Generator) -> Subgraph:
    """Draw ``g_s`` distinct training triples uniformly without replacement."""
    if g_s < 1:
        raise ValueError(f"subgraph size must be >= 1, got {g_s}")
    n = len(kg.train)
    if g_s >= n:
        return Subgraph(kg.train.copy())
    idx = rng.choice(n, size=g_s, replace=False)
    return Subgraph(kg.train[idx])


def full_graph(kg: KnowledgeGraph) -> Subgraph:
    return Subgraph(kg.train.copy())
