"""Nucleotide-to-codon tokenizer with its de-tokenizer and amino-acid translator."""

from __future__ import annotations

import numpy as np

from .config import TokenizerConfig
from .encoder import delta_block, init_delta_block, swap_halves
from .errors import IdOutOfRange, LengthNotMultipleOfThree
from .numerics.functional import IGNORE_INDEX, conv1d, conv_transpose1d, cross_entropy, fold3, unfold3
from .numerics.tensor import Tensor, as_tensor, concat, embedding_lookup, reshape, silu, slice_axis
from .params import Initializer, ParamModule
from .seqcore import N_AA_CLASSES, NT_VOCAB_SIZE, PAD

N_SPECIAL = 5


def init_tokenizer(cfg: TokenizerConfig, init: Initializer, prefix: str = "tokenizer/") -> dict:
    cfg.validate()
    d = cfg.embed_dim
    p = {}
    if cfg.tie_embedding:
        # specials are their own complement, so they are stored as one half
        p["emb_special"] = init.normal((N_SPECIAL, d // 2), 1.0)
        p["emb_base"] = init.normal((2, d), 1.0)          # rows for A and C
    else:
        p["embedding"] = init.normal((NT_VOCAB_SIZE, d), 1.0)
    p.update({
        "conv_w": init.fan_in((3, d, d), fan=3 * d),
        "conv_b": init.const((d,), 0.0),
        "proj_w": init.fan_in((3 * d, 2 * d)),
        "proj_b": init.const((2 * d,), 0.0),
        "detok_w": init.fan_in((2 * d, 3 * d)),
        "detok_b": init.const((3 * d,), 0.0),
        "deconv_w": init.fan_in((3, d, NT_VOCAB_SIZE), fan=3 * d),
        "deconv_b": init.const((NT_VOCAB_SIZE,), 0.0),
        "trans_w1": init.fan_in((2 * d, 4 * d)),
        "trans_b1": init.const((4 * d,), 0.0),
        "trans_w2": init.fan_in((4 * d, N_AA_CLASSES)),
        "trans_b2": init.const((N_AA_CLASSES,), 0.0),
    })
    p = {prefix + k: v for k, v in p.items()}
    if cfg.use_context:
        p.update(init_delta_block(init, prefix + "context.", d, cfg.heads, cfg.per_channel_gate,
                                  cfg.short_conv, 4 * d, cfg.layer_scale_init))
    return p


DETOK_HEAD = ("detok_w", "detok_b", "deconv_w", "deconv_b")
TRANS_HEAD = ("trans_w1", "trans_b1", "trans_w2", "trans_b2")


class Tokenizer(ParamModule):
    """embed -> context block -> conv -> unfold3 -> projection, plus the two heads."""

    def __init__(self, cfg: TokenizerConfig, params: dict, adapters: dict | None = None,
                 prefix: str = "tokenizer/"):
        super().__init__(params, adapters)
        cfg.validate()
        self.cfg = cfg
        self.prefix = prefix

    def _q(self, name: str) -> Tensor:
        return self.params[self.prefix + name]

    def head_names(self) -> list[str]:
        return [self.prefix + n for n in DETOK_HEAD + TRANS_HEAD]

    def embedding_table(self) -> Tensor:
        if not self.cfg.tie_embedding:
            return self._q("embedding")
        half = self._q("emb_special")
        base = self._q("emb_base")
        a = slice_axis(base, 0, 1, axis=0)
        c = slice_axis(base, 1, 2, axis=0)
        # rows ordered PAD..MASK, A, C, G, T with G = swap(C), T = swap(A)
        return concat([concat([half, half], axis=-1), a, c, swap_halves(c), swap_halves(a)], axis=0)

    def embed(self, tokens) -> Tensor:
        ids = np.asarray(tokens)
        if ids.size and (ids.min() < 0 or ids.max() >= NT_VOCAB_SIZE):
            raise IdOutOfRange(f"token ids must lie in [0, {NT_VOCAB_SIZE})")
        return embedding_lookup(self.embedding_table(), ids.astype(np.int64))

    def context(self, E: Tensor, nonpad) -> Tensor:
        if not self.cfg.use_context:
            return E
        return delta_block(self, self.prefix + "context.", E, nonpad, self.cfg.heads,
                           self.cfg.delta_impl, self.cfg.delta_chunk, self.cfg.norm_eps)

    def codon_condense(self, E, nonpad=None) -> Tensor:
        """(B, L, d) or (L, d) nucleotide features to (..., L/3, 2d) codon embeddings."""
        E = as_tensor(E)
        unbatched = E.ndim == 2
        if unbatched:
            E = reshape(E, (1, *E.shape))
        b, length, _ = E.shape
        if length % 3:
            raise LengthNotMultipleOfThree(f"length {length} is not a multiple of 3")
        mask = np.ones((b, length), dtype=bool) if nonpad is None else np.asarray(nonpad).reshape(b, length)
        x = self.context(E, mask)
        x = conv1d(x, self._q("conv_w"), self._q("conv_b"), padding=1)
        C = self.linear(self.prefix + "proj_w", unfold3(x), bias=self.prefix + "proj_b")
        return reshape(C, C.shape[1:]) if unbatched else C

    def tokens_to_codons(self, tokens) -> Tensor:
        ids = np.asarray(tokens)
        return self.codon_condense(self.embed(ids), ids != PAD)

    def detokenize(self, C) -> Tensor:
        """(..., n, 2d) codon embeddings to (..., 3n, 9) nucleotide logits."""
        h = self.linear(self.prefix + "detok_w", as_tensor(C), bias=self.prefix + "detok_b")
        return conv_transpose1d(fold3(h), self._q("deconv_w"), self._q("deconv_b"), padding=1)

    def translate_head(self, C) -> Tensor:
        """(..., n, 2d) codon embeddings to (..., n, 21) amino-acid logits."""
        h = silu(self.linear(self.prefix + "trans_w1", as_tensor(C), bias=self.prefix + "trans_b1"))
        return self.linear(self.prefix + "trans_w2", h, bias=self.prefix + "trans_b2")


def mlm_loss(nt_logits: Tensor, target_tokens) -> Tensor:
    """Cross-entropy at masked positions; ``target_tokens`` is -100 elsewhere."""
    return cross_entropy(nt_logits, np.asarray(target_tokens), IGNORE_INDEX)


def trans_loss(aa_logits: Tensor, aa_targets) -> Tensor:
    """Mean cross-entropy over codon cells that carry an amino-acid target."""
    return cross_entropy(aa_logits, np.asarray(aa_targets), IGNORE_INDEX)
