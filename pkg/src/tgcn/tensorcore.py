"""Third-order tensor kernels: n-mode products, CP reconstruction and the
relation-conditioned transform used by the encoder layers.

Mode convention for CP factors (fixed, see README): ``W2`` binds mode 1
(entity, ``d_e``), ``W1`` binds mode 2 (relation, ``d_r``), ``W3`` binds
mode 3 (output, ``d_o``)::

    dense[i, j, k] = sum_b W2[b, i] * W1[b, j] * W3[b, k]
"""

from __future__ import annotations

import math

import torch
from torch import nn

DENSE = "dense"
CP = "cp"


class ShapeError(ValueError):
    pass


def n_mode_product(tensor, vector, mode: int) -> torch.Tensor:
    """Contract ``vector`` against axis ``mode`` (1-based) of a third-order tensor."""
    tensor = torch.as_tensor(tensor)
    vector = torch.as_tensor(vector, dtype=tensor.dtype)
    if tensor.dim() != 3:
        raise ShapeError(f"expected a third-order tensor, got {tensor.dim()} axes")
    if mode not in (1, 2, 3):
        raise ShapeError(f"mode must be 1, 2 or 3, got {mode}")
    axis = mode - 1
    if vector.shape != (tensor.shape[axis],):
        raise ShapeError(
            f"mode-{mode} product needs a vector of length {tensor.shape[axis]}, got shape {tuple(vector.shape)}"
        )
    return torch.tensordot(tensor, vector, dims=([axis], [0]))


def uniform_init(shape, bound, dtype=None, generator=None) -> torch.Tensor:
    """U(-bound, bound) draw; in-place so it stays cheap on the meta device."""
    return torch.empty(shape, dtype=dtype).uniform_(-bound, bound, generator=generator)


class CoreTensor(nn.Module):
    """Relation-conditioning weight of shape ``(d_e, d_r, d_o)``, stored dense or as CP factors."""

    def __init__(self, d_e: int, d_r: int, d_o: int, n_b: int | None = None,
                 dtype=torch.float32, generator=None):
        super().__init__()
        self.dims = (d_e, d_r, d_o)
        self.n_b = n_b
        if n_b is None:
            self.layout = DENSE
            self.dense = nn.Parameter(uniform_init((d_e, d_r, d_o), 1.0 / math.sqrt(d_e * d_r), dtype, generator))
        else:
            if n_b < 1:
                raise ValueError(f"CP rank must be >= 1, got {n_b}")
            self.layout = CP
            self.W1 = nn.Parameter(uniform_init((n_b, d_r), 1.0 / math.sqrt(d_r), dtype, generator))
            self.W2 = nn.Parameter(uniform_init((n_b, d_e), 1.0 / math.sqrt(d_e), dtype, generator))
            self.W3 = nn.Parameter(uniform_init((n_b, d_o), 1.0 / math.sqrt(n_b), dtype, generator))

    @classmethod
    def from_dense(cls, array) -> "CoreTensor":
        array = torch.as_tensor(array)
        if array.dim() != 3:
            raise ShapeError(f"dense core must have 3 axes, got {array.dim()}")
        core = cls(*array.shape, dtype=array.dtype)
        with torch.no_grad():
            core.dense.copy_(array)
        return core

    @classmethod
    def from_factors(cls, W1, W2, W3) -> "CoreTensor":
        W1, W2, W3 = (torch.as_tensor(w) for w in (W1, W2, W3))
        n_b = W1.shape[0]
        if W2.shape[0] != n_b or W3.shape[0] != n_b:
            raise ShapeError(f"factor ranks disagree: {W1.shape[0]}, {W2.shape[0]}, {W3.shape[0]}")
        core = cls(W2.shape[1], W1.shape[1], W3.shape[1], n_b=n_b, dtype=W1.dtype)
        with torch.no_grad():
            core.W1.copy_(W1)
            core.W2.copy_(W2)
            core.W3.copy_(W3)
        return core

    @property
    def num_parameters(self) -> int:
        d_e, d_r, d_o = self.dims
        if self.layout == CP:
            return self.n_b * (d_e + d_r + d_o)
        return d_e * d_r * d_o

    def full(self) -> torch.Tensor:
        """Dense ``(d_e, d_r, d_o)`` view; materializes CP factors (oracle use only)."""
        if self.layout == DENSE:
            return self.dense
        return torch.einsum("bi,bj,bk->ijk", self.W2, self.W1, self.W3)

    def transform(self, h: torch.Tensor, e_r: torch.Tensor) -> torch.Tensor:
        return relation_transform(self, h, e_r)

    def relation_matrices(self, e_rel: torch.Tensor) -> torch.Tensor:
        """``(R, d_e, d_o)`` stack of ``core x_2 e_r`` for each relation row."""
        if self.layout == DENSE:
            return torch.einsum("ijk,rj->rik", self.dense, e_rel)
        g = e_rel @ self.W1.T
        return torch.einsum("bi,rb,bk->rik", self.W2, g, self.W3)


def cp_reconstruct(core: CoreTensor) -> CoreTensor:
    if core.layout != CP:
        raise TypeError("cp_reconstruct expects a CP-layout core")
    with torch.no_grad():
        return CoreTensor.from_dense(core.full().detach().clone())


def relation_transform(core: CoreTensor, h: torch.Tensor, e_r: torch.Tensor) -> torch.Tensor:
    """``core x_1 h x_2 e_r`` for a vector pair or row-aligned batches of them.

    The CP path never materializes the dense tensor:
    ``W3^T ((W2 h) * (W1 e_r))``.
    """
    d_e, d_r, _ = core.dims
    if h.shape[-1] != d_e or e_r.shape[-1] != d_r:
        raise ShapeError(f"core expects entity dim {d_e} and relation dim {d_r}, "
                         f"got {h.shape[-1]} and {e_r.shape[-1]}")
    if h.shape[:-1] != e_r.shape[:-1]:
        raise ShapeError(f"batch shapes differ: {tuple(h.shape[:-1])} vs {tuple(e_r.shape[:-1])}")
    if core.layout == CP:
        return ((h @ core.W2.T) * (e_r @ core.W1.T)) @ core.W3
    return torch.einsum("...i,...j,ijk->...k", h, e_r, core.dense)
