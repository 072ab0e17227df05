"""R-GCN baseline layer with full, basis, block-diagonal and CP relation weights."""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .encoder import ACTIVATIONS, EdgeIndex, aggregate
from .tensorcore import ShapeError, uniform_init

SCHEMES = ("full", "basis", "block", "cp")


def _uniform(shape, bound, dtype, generator):
    return nn.Parameter(uniform_init(shape, bound, dtype, generator))


class RelationWeightBank(nn.Module):
    """One ``d x d`` matrix ``W_r`` per relation, under a parameter-sharing scheme.

    ``full``  -- ``R`` free matrices.
    ``basis`` -- ``W_r = sum_b coeff[r, b] * bases[b]``.
    ``block`` -- block-diagonal with ``num_blocks`` square blocks.
    ``cp``    -- ``W_r[i, k] = sum_b U1[b, r] * U2[b, i] * U3[b, k]``.
    """

    def __init__(self, scheme: str, num_relations: int, dim: int, n_b: int | None = None,
                 num_blocks: int | None = None, dtype=torch.float32, generator=None):
        super().__init__()
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
        self.scheme = scheme
        self.num_relations = num_relations
        self.dim = dim
        bound = 1.0 / math.sqrt(dim)
        if scheme == "full":
            self.weight = _uniform((num_relations, dim, dim), bound, dtype, generator)
        elif scheme == "basis":
            if not n_b or n_b < 1:
                raise ValueError("basis scheme needs n_b >= 1")
            self.bases = _uniform((n_b, dim, dim), bound, dtype, generator)
            self.coeff = _uniform((num_relations, n_b), 1.0 / math.sqrt(n_b), dtype, generator)
        elif scheme == "block":
            if not num_blocks or dim % num_blocks:
                raise ValueError(f"block scheme needs a block count dividing {dim}, got {num_blocks}")
            size = dim // num_blocks
            self.blocks = _uniform((num_relations, num_blocks, size, size), 1.0 / math.sqrt(size), dtype, generator)
        else:
            if not n_b or n_b < 1:
                raise ValueError("cp scheme needs n_b >= 1")
            self.U1 = _uniform((n_b, num_relations), 1.0, dtype, generator)
            self.U2 = _uniform((n_b, dim), 1.0 / math.sqrt(n_b), dtype, generator)
            self.U3 = _uniform((n_b, dim), bound, dtype, generator)

    @property
    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def all_weights(self) -> torch.Tensor:
        """``(R, d, d)`` stack of materialized relation matrices."""
        if self.scheme == "full":
            return self.weight
        if self.scheme == "basis":
            return torch.einsum("rb,bik->rik", self.coeff, self.bases)
        if self.scheme == "block":
            return torch.stack([torch.block_diag(*blocks) for blocks in self.blocks])
        return torch.einsum("br,bi,bk->rik", self.U1, self.U2, self.U3)

    def messages(self, edges: EdgeIndex, H: torch.Tensor) -> torch.Tensor:
        """Per-edge ``W_r h_u``."""
        h_u = H[edges.src]
        if edges.num_edges == 0:
            return h_u.new_zeros((0, self.dim))
        if self.scheme == "cp":
            return ((h_u @ self.U3.T) * self.U1.T[edges.rel]) @ self.U2
        order, groups = edges.relation_segments()
        weights = self.all_weights()
        pieces = [h_u[seg] @ weights[r].T for r, seg in groups]
        return torch.cat(pieces)[torch.argsort(order)]


def materialize_weight(bank: RelationWeightBank, r: int) -> torch.Tensor:
    if not 0 <= r < bank.num_relations:
        raise IndexError(f"relation id {r} out of range [0, {bank.num_relations})")
    if bank.scheme == "full":
        return bank.weight[r]
    if bank.scheme == "basis":
        return torch.einsum("b,bik->ik", bank.coeff[r], bank.bases)
    if bank.scheme == "block":
        return torch.block_diag(*bank.blocks[r])
    return torch.einsum("b,bi,bk->ik", bank.U1[:, r], bank.U2, bank.U3)


class RGCNLayer(nn.Module):
    def __init__(self, scheme: str, num_relations: int, dim: int, n_b=None, num_blocks=None,
                 activation: str = "relu", dtype=torch.float32, generator=None):
        super().__init__()
        self.bank = RelationWeightBank(scheme, num_relations, dim, n_b, num_blocks, dtype, generator)
        self.loop_weight = _uniform((dim, dim), 1.0 / math.sqrt(dim), dtype, generator)
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation

    def forward(self, edges: EdgeIndex, H, relation_table=None, dropout: float = 0.0, training: bool = False):
        return rgcn_layer_forward(self.bank, edges, H, self.loop_weight, self.activation, dropout, training)


def rgcn_layer_forward(bank: RelationWeightBank, edges: EdgeIndex, H: torch.Tensor, loop_weight: torch.Tensor,
                       activation: str = "relu", dropout: float = 0.0, training: bool = False) -> torch.Tensor:
    if H.shape != (edges.num_nodes, bank.dim):
        raise ShapeError(f"representations must be ({edges.num_nodes}, {bank.dim}), got {tuple(H.shape)}")
    pre = aggregate(bank.messages(edges, H), edges) + H @ loop_weight.T
    pre = F.dropout(pre, dropout, training=training and dropout > 0)
    return ACTIVATIONS[activation](pre)
