"""Full model: tokenizer trunk, hybrid encoder and the three output heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .encoder import Encoder, init_encoder
from .numerics.functional import rmsnorm
from .numerics.tensor import Tensor, silu
from .params import Initializer, ParamModule
from .seqcore import PAD
from .tokenizer import Tokenizer, init_tokenizer


@dataclass
class ModelOutput:
    codons: Tensor          # (B, n, 2d) tokenizer codon embeddings
    hidden: Tensor          # (B, n, D) fused encoder states
    nt_logits: Tensor       # (B, 3n, 9)
    aa_logits: Tensor       # (B, n, 21)
    protein: Tensor | None  # (B, n, D') student vectors for distillation


def init_model(cfg: ModelConfig, seed: int = 0, dtype="float64") -> dict:
    cfg.validate()
    init = Initializer(seed, dtype)
    params = init_tokenizer(cfg.tokenizer, init)
    params.update(init_encoder(cfg.encoder, init))
    d2, D, Dt = cfg.tokenizer.codon_dim, cfg.encoder.model_dim, cfg.teacher_dim
    if d2 != D:
        params["bridge/in_w"] = init.fan_in((d2, D))
        params["bridge/out_w"] = init.fan_in((D, d2))
    params["bridge/final_norm"] = init.const((D,), 1.0)
    params["protein/w1"] = init.fan_in((D, 4 * D))
    params["protein/b1"] = init.const((4 * D,), 0.0)
    params["protein/w2"] = init.fan_in((4 * D, Dt))
    params["protein/b2"] = init.const((Dt,), 0.0)
    return params


class LifeCodeModel(ParamModule):
    """Shares one parameter dict between the tokenizer and the encoder views."""

    def __init__(self, cfg: ModelConfig, params: dict, adapters: dict | None = None):
        super().__init__(params, adapters)
        cfg.validate()
        self.cfg = cfg
        self.tokenizer = Tokenizer(cfg.tokenizer, params, self.adapters)
        self.encoder = Encoder(cfg.encoder, params, self.adapters)

    @property
    def bridged(self) -> bool:
        return self.cfg.tokenizer.codon_dim != self.cfg.encoder.model_dim

    def encode_tokens(self, tokens) -> tuple[Tensor, Tensor]:
        """Token ids (B, L) to (codon embeddings, fused hidden states at model dim)."""
        ids = np.asarray(tokens)
        if ids.ndim == 1:
            ids = ids[None, :]
        C = self.tokenizer.tokens_to_codons(ids)
        cell_nonpad = (ids != PAD).reshape(ids.shape[0], -1, 3).any(axis=-1)
        x = self.linear("bridge/in_w", C) if self.bridged else C
        H = self.encoder.encode(x, cell_nonpad)
        return C, rmsnorm(H, self.p("bridge/final_norm"), self.cfg.encoder.norm_eps)

    def protein_decoder(self, H: Tensor) -> Tensor:
        h = silu(self.linear("protein/w1", H, bias="protein/b1"))
        return self.linear("protein/w2", h, bias="protein/b2")

    def forward(self, tokens, with_protein: bool = True) -> ModelOutput:
        C, H = self.encode_tokens(tokens)
        Z = self.linear("bridge/out_w", H) if self.bridged else H
        return ModelOutput(
            codons=C,
            hidden=H,
            nt_logits=self.tokenizer.detokenize(Z),
            aa_logits=self.tokenizer.translate_head(Z),
            protein=self.protein_decoder(H) if with_protein else None,
        )

    def tokenizer_forward(self, tokens) -> ModelOutput:
        """Tokenizer-only path used for tokenizer pre-training (no encoder)."""
        ids = np.asarray(tokens)
        if ids.ndim == 1:
            ids = ids[None, :]
        C = self.tokenizer.tokens_to_codons(ids)
        return ModelOutput(C, C, self.tokenizer.detokenize(C), self.tokenizer.translate_head(C), None)


def cast_params(params: dict, dtype) -> dict:
    return {k: Tensor(v.data.astype(dtype), requires_grad=True) for k, v in params.items()}
