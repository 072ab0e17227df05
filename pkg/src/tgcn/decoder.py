"""Triple scorers: DistMult and TuckER."""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F

from .tensorcore import ShapeError, uniform_init

DISTMULT = "distmult"
TUCKER = "tucker"


class Decoder(nn.Module):
    """Scores ``(h_s, e_r, h_t)``; raw scores, apply a sigmoid for probabilities."""

    def __init__(self, kind: str, dim: int, rel_dim: int | None = None, dropout: float = 0.0,
                 dtype=torch.float32, generator=None):
        super().__init__()
        kind = kind.lower()
        rel_dim = dim if rel_dim is None else rel_dim
        if kind not in (DISTMULT, TUCKER):
            raise ValueError(f"unknown decoder {kind!r}")
        if kind == DISTMULT and rel_dim != dim:
            raise ShapeError("DistMult needs equal entity and relation dimensions")
        self.kind = kind
        self.dim = dim
        self.rel_dim = rel_dim
        self.dropout = dropout
        if kind == TUCKER:
            bound = 1.0 / math.sqrt(dim * rel_dim)
            self.core = nn.Parameter(uniform_init((dim, rel_dim, dim), bound, dtype, generator))

    @property
    def num_parameters(self) -> int:
        return self.core.numel() if self.kind == TUCKER else 0

    def query(self, h_s: torch.Tensor, e_r: torch.Tensor, training: bool = False) -> torch.Tensor:
        """Contract source and relation; the score is then ``query . h_t``."""
        if h_s.shape[-1] != self.dim or e_r.shape[-1] != self.rel_dim:
            raise ShapeError(f"decoder expects dims ({self.dim}, {self.rel_dim}), "
                             f"got ({h_s.shape[-1]}, {e_r.shape[-1]})")
        if self.kind == DISTMULT:
            return h_s * e_r
        q = torch.einsum("...i,...j,ijk->...k", h_s, e_r, self.core)
        return F.dropout(q, self.dropout, training=training and self.dropout > 0)

    def score(self, h_s, e_r, h_t, training: bool = False) -> torch.Tensor:
        if h_t.shape[-1] != self.dim:
            raise ShapeError(f"target dim {h_t.shape[-1]} != {self.dim}")
        return (self.query(h_s, e_r, training) * h_t).sum(-1)

    def score_all_targets(self, h_s, e_r, candidates: torch.Tensor, training: bool = False) -> torch.Tensor:
        """Scores of each query row against every candidate row: ``(B, N)`` or ``(N,)``."""
        if candidates.dim() != 2 or candidates.shape[1] != self.dim:
            raise ShapeError(f"candidates must be (N, {self.dim}), got {tuple(candidates.shape)}")
        return self.query(h_s, e_r, training) @ candidates.T


def score(params: Decoder, h_s, e_r, h_t) -> torch.Tensor:
    return params.score(h_s, e_r, h_t)


def score_all_targets(params: Decoder, h_s, e_r, candidates) -> torch.Tensor:
    return params.score_all_targets(h_s, e_r, candidates)
