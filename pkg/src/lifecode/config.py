"""Model and training configuration with ``paper`` and ``desk`` presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError, OddDim, OddHeadDim


@dataclass
class TokenizerConfig:
    embed_dim: int = 64
    heads: int = 4
    tie_embedding: bool = True
    use_context: bool = True
    per_channel_gate: bool = False
    delta_impl: str = "chunkwise"
    delta_chunk: int = 32
    short_conv: int = 4
    layer_scale_init: float = 1e-5
    norm_eps: float = 1e-6

    @property
    def codon_dim(self) -> int:
        return 2 * self.embed_dim

    def validate(self):
        if self.embed_dim < 4 or self.embed_dim % 2:
            raise ConfigError("tokenizer embed_dim must be even and >= 4")
        if self.embed_dim % self.heads:
            raise ConfigError("tokenizer embed_dim must be divisible by heads")


@dataclass
class EncoderConfig:
    model_dim: int = 128
    n_layers: int = 4
    attn_every: int | None = 3
    heads: int = 4
    ffn_mult: int = 4
    layer_scale_init: float = 1e-5
    per_channel_gate: bool = False
    delta_impl: str = "chunkwise"
    delta_chunk: int = 32
    short_conv: int = 4
    rope_base: float = 10000.0
    norm_eps: float = 1e-6

    @property
    def strand_dim(self) -> int:
        return self.model_dim // 2

    @property
    def head_dim(self) -> int:
        return self.strand_dim // self.heads

    @property
    def ffn_hidden(self) -> int:
        return self.ffn_mult * self.strand_dim

    def validate(self):
        if self.model_dim % 2:
            raise OddDim(f"model_dim {self.model_dim} must be even")
        if self.strand_dim % self.heads:
            raise ConfigError("model_dim / 2 must be divisible by heads")
        if self.head_dim % 2:
            raise OddHeadDim(f"head_dim {self.head_dim} must be even for RoPE")
        if self.delta_impl not in ("chunkwise", "recurrent"):
            raise ConfigError(f"unknown delta_impl {self.delta_impl!r}")


@dataclass
class ModelConfig:
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    teacher_dim: int = 32

    def validate(self):
        self.tokenizer.validate()
        self.encoder.validate()
        if self.teacher_dim < 2:
            raise ConfigError("teacher_dim must be >= 2")


@dataclass
class TrainConfig:
    lr: float = 1e-3
    min_lr: float = 1e-6
    warmup_steps: int = 20
    total_steps: int = 500
    betas: tuple = (0.9, 0.98)
    weight_decay: float = 1e-2
    adam_eps: float = 1e-8
    grad_clip: float = 1.0
    batch_size: int = 8
    max_len: int = 4096
    mask_rate: float = 0.15
    mask_split: tuple = (0.8, 0.1, 0.1)
    kd_tau_student: float = 0.1
    kd_tau_teacher: float = 0.04
    kd_center: bool = False
    loss_eps: float = 1e-8
    tasks: tuple = ("mlm", "trans", "kd")
    freeze_heads: bool = True
    freeze_tokenizer: bool = False
    dtype: str = "float32"
    seed: int = 0


PRESETS: dict[str, dict[str, Any]] = {
    "desk": {
        "model": {
            "tokenizer": {"embed_dim": 64, "heads": 4},
            "encoder": {"model_dim": 128, "n_layers": 4, "attn_every": 3, "heads": 4},
            "teacher_dim": 32,
        },
        "train": {"lr": 1e-3, "warmup_steps": 20, "total_steps": 500, "batch_size": 8,
                  "max_len": 300},
    },
    "paper": {
        "model": {
            "tokenizer": {"embed_dim": 384, "heads": 6},
            "encoder": {"model_dim": 1024, "n_layers": 24, "attn_every": 11, "heads": 16},
            "teacher_dim": 1280,
        },
        "train": {"lr": 1e-4, "warmup_steps": 10_000, "total_steps": 1_000_000,
                  "batch_size": 256, "max_len": 4096},
    },
}


def _from_dict(cls, data: dict, path: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or cls.__name__} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"unknown config keys at {path or cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        sub = {"tokenizer": TokenizerConfig, "encoder": EncoderConfig}.get(name)
        if cls is ModelConfig and sub is not None:
            kwargs[name] = _from_dict(sub, value, f"{path}{name}.")
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def model_config_from_dict(data: dict) -> ModelConfig:
    cfg = _from_dict(ModelConfig, data)
    cfg.validate()
    return cfg


def train_config_from_dict(data: dict) -> TrainConfig:
    return _from_dict(TrainConfig, data)


def to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def preset(name: str, overrides: dict | None = None) -> tuple[ModelConfig, TrainConfig]:
    """Resolve a named preset plus optional ``{"model": ..., "train": ...}`` overrides."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    merged = _merge(PRESETS[name], overrides or {})
    unknown = set(merged) - {"model", "train"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    return model_config_from_dict(merged["model"]), train_config_from_dict(merged["train"])
