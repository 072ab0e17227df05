"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .kgdata import DATASET_STATS
from .model import ModelConfig
from .training import ConfigError, TrainConfig

ENV_PREFIX = "TGCN_"


@dataclass
class RunConfig:
    dataset: str = ""
    data_dir: str = ""
    train_path: str = ""
    valid_path: str = ""
    test_path: str = ""
    num_entities: int = 0
    num_relations: int = 0
    reciprocal: bool = True
    encoder: str = "tgcn"
    core: str = "dense"
    n_b: int = 100
    decoder: str = "tucker"
    dim: int = 100
    num_layers: int = 2
    activations: str = "relu,identity"
    loss: str = "1n"
    tau: float = 1.0
    lr: float = 0.005
    decay: float = 0.95
    decay_period: int = 500
    reg_f: float = 0.01
    g_s: int = 90000
    dr_i: float = 0.0
    dr_h1: float = 0.0
    dr_h2: float = 0.0
    dr_o: float = 0.0
    dr_d: float = 0.0
    max_iterations: int = 10000
    eval_period: int = 500
    patience: int = 20
    sub_batch: int = 0
    eval_batch_size: int = 256
    rgcn_scheme: str = "cp"
    rgcn_n_b: int = 100
    rgcn_blocks: int = 0
    dtype: str = "float32"
    seed: int = 0
    out: str = "runs/default"

    def validate(self) -> None:
        problems = []
        if self.encoder not in ("tgcn", "rgcn"):
            problems.append(f"encoder: expected tgcn or rgcn, got {self.encoder!r}")
        if self.core not in ("dense", "cp"):
            problems.append(f"core: expected dense or cp, got {self.core!r}")
        if self.decoder not in ("distmult", "tucker"):
            problems.append(f"decoder: expected distmult or tucker, got {self.decoder!r}")
        if self.loss not in ("1n", "1b"):
            problems.append(f"loss: expected 1n or 1b, got {self.loss!r}")
        if self.rgcn_scheme not in ("full", "basis", "block", "cp"):
            problems.append(f"rgcn_scheme: unknown scheme {self.rgcn_scheme!r}")
        for key in ("dr_i", "dr_h1", "dr_h2", "dr_o", "dr_d"):
            if not 0.0 <= getattr(self, key) < 1.0:
                problems.append(f"{key}: rate must lie in [0, 1)")
        for key in ("tau", "lr"):
            if not getattr(self, key) > 0:
                problems.append(f"{key}: must be > 0")
        for key in ("dim", "g_s", "decay_period"):
            if getattr(self, key) < 1:
                problems.append(f"{key}: must be >= 1")
        if self.core == "cp" and self.n_b < 1:
            problems.append("n_b: must be >= 1 for cp cores")
        if self.dtype not in ("float32", "float64"):
            problems.append(f"dtype: expected float32 or float64, got {self.dtype!r}")
        if problems:
            raise ConfigError("; ".join(problems))

    def split_paths(self) -> tuple[Path, Path, Path] | None:
        base = Path(self.data_dir) if self.data_dir else None
        paths = []
        for split, explicit in (("train", self.train_path), ("valid", self.valid_path), ("test", self.test_path)):
            if explicit:
                paths.append(Path(explicit))
            elif base is not None:
                paths.append(base / f"{split}.txt")
            else:
                return None
        return tuple(paths)

    def graph_sizes(self) -> tuple[int, int]:
        """``(entities, raw relations)`` from explicit keys or known benchmark statistics."""
        if self.num_entities and self.num_relations:
            return self.num_entities, self.num_relations
        stats = DATASET_STATS.get(self.dataset.lower())
        if stats is None:
            raise ConfigError(f"dataset: no size information for {self.dataset!r}; set num_entities/num_relations")
        return stats[0], stats[1]

    def model_config(self, num_entities: int, num_relations: int) -> ModelConfig:
        """``num_relations`` counts the relation table rows (inverses included)."""
        return ModelConfig(
            num_entities=num_entities,
            num_relations=num_relations,
            dim=self.dim,
            encoder=self.encoder,
            n_b=self.n_b if self.core == "cp" else None,
            decoder=self.decoder,
            num_layers=self.num_layers,
            activations=tuple(a.strip() for a in self.activations.split(",") if a.strip()),
            dr_i=self.dr_i,
            dr_h=(self.dr_h1, self.dr_h2),
            dr_o=self.dr_o,
            dr_d=self.dr_d if self.decoder == "tucker" else 0.0,
            rgcn_scheme=self.rgcn_scheme,
            rgcn_n_b=self.rgcn_n_b or None,
            rgcn_blocks=self.rgcn_blocks or None,
            dtype=self.dtype,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss, tau=self.tau, lr=self.lr, decay=self.decay, decay_period=self.decay_period,
            reg_f=self.reg_f, g_s=self.g_s, max_iterations=self.max_iterations,
            eval_period=self.eval_period, patience=self.patience, sub_batch=self.sub_batch, seed=self.seed,
        )


_FIELDS = {f.name: f for f in fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = type(getattr(RunConfig, key))
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    return raw


def parse_config(text: str, env: dict | None = None) -> RunConfig:
    values = {}
    unknown = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            unknown.append(key)
            continue
        values[key] = _convert(key, raw)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    for name, raw in (env or {}).items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower()
            if key not in _FIELDS:
                raise ConfigError(f"unknown key from environment variable {name}")
            values[key] = _convert(key, raw)
    config = RunConfig(**values)
    config.validate()
    return config


def serialize_config(config: RunConfig) -> str:
    lines = []
    for name in _FIELDS:
        value = getattr(config, name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{name} = {value}")
    return "\n".join(lines) + "\n"


def preset_path(name: str) -> Path:
    return Path(str(resources.files("tgcn") / "presets" / name))


def load_config(path, use_env: bool = True) -> RunConfig:
    """Read a config file; a bare preset name (e.g. ``fb15k237_tucker.cfg``) also resolves."""
    p = Path(path)
    if not p.exists():
        candidate = preset_path(p.name if p.suffix else p.name + ".cfg")
        if not candidate.exists():
            raise ConfigError(f"config file {path} not found")
        p = candidate
    return parse_config(p.read_text(encoding="utf-8"), dict(os.environ) if use_env else None)
