"""Encoder-decoder model, parameter accounting and checkpoints."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn
from torch.nn import functional as F

from .decoder import Decoder
from .encoder import EdgeIndex, EncoderLayer
from .rgcn import RGCNLayer
from .tensorcore import uniform_init

CHECKPOINT_FORMAT = "tgcn-checkpoint"
CHECKPOINT_VERSION = 1

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ModelConfig:
    num_entities: int
    num_relations: int
    dim: int = 100
    encoder: str = "tgcn"
    n_b: int | None = None
    decoder: str = "tucker"
    num_layers: int = 2
    activations: tuple[str, ...] = ("relu", "identity")
    dr_i: float = 0.0
    dr_h: tuple[float, ...] = (0.0, 0.0)
    dr_o: float = 0.0
    dr_d: float = 0.0
    rgcn_scheme: str = "cp"
    rgcn_n_b: int | None = 100
    rgcn_blocks: int | None = None
    dtype: str = "float32"
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.activations = tuple(self.activations)
        self.dr_h = tuple(self.dr_h)
        if self.encoder not in ("tgcn", "rgcn"):
            raise ValueError(f"unknown encoder {self.encoder!r}")
        if self.dtype not in DTYPES:
            raise ValueError(f"unknown dtype {self.dtype!r}")

    def activation(self, layer: int) -> str:
        acts = self.activations or ("relu",)
        return acts[min(layer, len(acts) - 1)]

    def hidden_dropout(self, layer: int) -> float:
        rates = self.dr_h or (0.0,)
        return rates[min(layer, len(rates) - 1)]


class TgcnModel(nn.Module):
    """Entity/relation tables, a stack of message-passing layers and a decoder."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__()
        self.config = config
        dtype = DTYPES[config.dtype]
        gen = torch.Generator().manual_seed(seed)
        d = config.dim
        bound = 1.0 / math.sqrt(d)
        self.entity = nn.Parameter(uniform_init((config.num_entities, d), bound, dtype, gen))
        self.relation = nn.Parameter(uniform_init((config.num_relations, d), bound, dtype, gen))
        layers = []
        for l in range(config.num_layers):
            if config.encoder == "tgcn":
                layers.append(EncoderLayer(d, d, n_b=config.n_b, activation=config.activation(l),
                                           dtype=dtype, generator=gen))
            else:
                layers.append(RGCNLayer(config.rgcn_scheme, config.num_relations, d, n_b=config.rgcn_n_b,
                                        num_blocks=config.rgcn_blocks, activation=config.activation(l),
                                        dtype=dtype, generator=gen))
        self.layers = nn.ModuleList(layers)
        self.decoder = Decoder(config.decoder, d, dropout=config.dr_d, dtype=dtype, generator=gen)

    @property
    def dtype(self):
        return self.entity.dtype

    def encode(self, edges: EdgeIndex, training: bool = False) -> torch.Tensor:
        """Representations for ``edges.nodes`` (row-aligned)."""
        cfg = self.config
        H = self.entity[edges.nodes]
        H = F.dropout(H, cfg.dr_i, training=training and cfg.dr_i > 0)
        for l, layer in enumerate(self.layers):
            H = layer(edges, H, self.relation, cfg.hidden_dropout(l), training)
        return F.dropout(H, cfg.dr_o, training=training and cfg.dr_o > 0)


def encode(model: TgcnModel, edges: EdgeIndex, training: bool = False) -> torch.Tensor:
    return model.encode(edges, training)


def count_parameters(model: TgcnModel) -> tuple[int, int]:
    """``(nfp, efp)``: non-embedding and embedding free parameter counts.

    R-GCN layers contribute their relation-weight bank only; TGCN layers
    contribute core tensor plus loop matrix.
    """
    efp = model.entity.numel() + model.relation.numel()
    nfp = model.decoder.num_parameters
    for layer in model.layers:
        if isinstance(layer, RGCNLayer):
            nfp += layer.bank.num_parameters
        else:
            nfp += layer.num_parameters
    return nfp, efp


def encoder_parameters(model: TgcnModel) -> int:
    nfp, _ = count_parameters(model)
    return nfp - model.decoder.num_parameters


def save_checkpoint(path, model: TgcnModel, **metadata) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "state_dict": {k: v.detach().clone() for k, v in model.state_dict().items()},
        **metadata,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


class CheckpointError(RuntimeError):
    pass


def load_checkpoint(path) -> tuple[TgcnModel, dict]:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {payload.get('version')}")
    model = TgcnModel(ModelConfig(**payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    return model, payload
