"""Relational message passing: edge indexing, normalized aggregation and TGCN layers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .kgdata import Subgraph
from .tensorcore import CP, CoreTensor, ShapeError, relation_transform, uniform_init

ACTIVATIONS = {
    "relu": torch.relu,
    "identity": lambda x: x,
    "tanh": torch.tanh,
}


@dataclass
class EdgeIndex:
    """In-edges of a subgraph in local node coordinates.

    ``nodes`` holds the global entity ids being encoded (sorted); ``src`` and
    ``dst`` index into it. ``norm`` is ``1 / c_{v,r}`` for each edge, where
    ``c_{v,r}`` is the number of in-edges of ``v`` under relation ``r``.
    """

    nodes: torch.Tensor
    src: torch.Tensor
    rel: torch.Tensor
    dst: torch.Tensor
    norm: torch.Tensor

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.rel)

    def local(self, global_ids) -> torch.Tensor:
        """Map global entity ids to rows of the encoded matrix."""
        ids = torch.as_tensor(global_ids, dtype=torch.long)
        pos = torch.searchsorted(self.nodes, ids)
        if len(ids) and (pos.max() >= len(self.nodes) or not torch.equal(self.nodes[pos], ids)):
            raise KeyError("entity not covered by this edge index")
        return pos

    def relation_segments(self):
        """Edges grouped by relation.

        Returns ``(order, groups)``: ``order`` sorts edges by relation and
        ``groups`` lists ``(relation, edge positions)`` in that order.
        """
        order = torch.argsort(self.rel, stable=True)
        rels, counts = torch.unique_consecutive(self.rel[order], return_counts=True)
        return order, list(zip(rels.tolist(), torch.split(order, counts.tolist())))


def build_edge_index(sub: Subgraph, nodes=None) -> EdgeIndex:
    """Index the edges of ``sub``; ``nodes`` defaults to its active entities.

    Every triple ``(s, r, t)`` becomes one in-edge of ``t``.
    """
    if nodes is None:
        nodes = sub.active_entities
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    tr = sub.triples
    src = np.searchsorted(nodes, tr[:, 0])
    dst = np.searchsorted(nodes, tr[:, 2])
    if len(tr) and (
        src.max(initial=0) >= len(nodes) or dst.max(initial=0) >= len(nodes)
        or not (np.array_equal(nodes[src], tr[:, 0]) and np.array_equal(nodes[dst], tr[:, 2]))
    ):
        raise ShapeError("node set does not cover every subgraph entity")
    rel = tr[:, 1]
    if len(tr):
        key = dst * (rel.max() + 1) + rel
        _, inv, counts = np.unique(key, return_inverse=True, return_counts=True)
        norm = 1.0 / counts[inv.reshape(-1)]
    else:
        norm = np.zeros(0)
    return EdgeIndex(
        nodes=torch.from_numpy(nodes),
        src=torch.from_numpy(src.astype(np.int64)),
        rel=torch.from_numpy(rel.astype(np.int64)),
        dst=torch.from_numpy(dst.astype(np.int64)),
        norm=torch.from_numpy(norm),
    )


def aggregate(messages: torch.Tensor, edges: EdgeIndex) -> torch.Tensor:
    """Sum ``norm * message`` into each destination row."""
    out = messages.new_zeros((edges.num_nodes, messages.shape[-1]))
    if edges.num_edges == 0:
        return out
    scaled = messages * edges.norm.to(messages.dtype).unsqueeze(-1)
    return out.index_add(0, edges.dst, scaled)


def tgcn_messages(core: CoreTensor, edges: EdgeIndex, H: torch.Tensor, relation_table: torch.Tensor):
    """Per-edge ``core x_1 h_u x_2 e_r``."""
    h_u = H[edges.src]
    if edges.num_edges == 0:
        return h_u.new_zeros((0, core.dims[2]))
    if core.layout == CP:
        return relation_transform(core, h_u, relation_table[edges.rel])
    # dense: one d_e x d_o matrix per relation present, applied to its edge group
    order, groups = edges.relation_segments()
    mats = core.relation_matrices(relation_table[[r for r, _ in groups]])
    pieces = [h_u[seg] @ mats[i] for i, (_, seg) in enumerate(groups)]
    return torch.cat(pieces)[torch.argsort(order)]


class EncoderLayer(nn.Module):
    def __init__(self, dim: int, rel_dim: int, n_b: int | None = None, activation: str = "relu",
                 dtype=torch.float32, generator=None):
        super().__init__()
        self.core = CoreTensor(dim, rel_dim, dim, n_b=n_b, dtype=dtype, generator=generator)
        bound = 1.0 / math.sqrt(dim)
        self.loop_weight = nn.Parameter(uniform_init((dim, dim), bound, dtype, generator))
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    @property
    def num_parameters(self) -> int:
        return self.core.num_parameters + self.loop_weight.numel()

    def forward(self, edges: EdgeIndex, H, relation_table, dropout: float = 0.0, training: bool = False):
        return layer_forward(self, edges, H, relation_table, dropout, training)


def layer_forward(layer: EncoderLayer, edges: EdgeIndex, H: torch.Tensor, relation_table: torch.Tensor,
                  dropout: float = 0.0, training: bool = False) -> torch.Tensor:
    """One TGCN propagation step over ``edges``.

    ``H`` has one row per ``edges.nodes``. Entities without in-edges get
    ``act(W_0 h_v)``.
    """
    d_e = layer.core.dims[0]
    if H.shape != (edges.num_nodes, d_e):
        raise ShapeError(f"representations must be ({edges.num_nodes}, {d_e}), got {tuple(H.shape)}")
    pre = aggregate(tgcn_messages(layer.core, edges, H, relation_table), edges) + H @ layer.loop_weight.T
    pre = F.dropout(pre, dropout, training=training and dropout > 0)
    return ACTIVATIONS[layer.activation](pre)
