"""Bidirectional hybrid encoder: strand split, delta/attention stack, fusion."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .config import EncoderConfig
from .delta import delta_rule_chunkwise, delta_rule_recurrent
from .errors import OddDim
from .numerics.functional import attention, causal_depthwise_conv, l2_normalize, rmsnorm, rope_apply
from .numerics.tensor import (
    Tensor,
    as_tensor,
    concat,
    reshape,
    reverse,
    sigmoid,
    silu,
    slice_axis,
    transpose,
)
from .params import Initializer, ParamModule

DELTA, ATTENTION = "delta", "attention"


class StrandPair(NamedTuple):
    plus: Tensor
    minus: Tensor


def split_strands(E) -> StrandPair:
    """First half of the features is the forward strand, second half the reverse."""
    E = as_tensor(E)
    d = E.shape[-1]
    if d % 2:
        raise OddDim(f"feature dim {d} is odd")
    return StrandPair(slice_axis(E, 0, d // 2, axis=-1), slice_axis(E, d // 2, d, axis=-1))


def fuse_strands(pair: StrandPair) -> Tensor:
    return concat([pair.plus, pair.minus], axis=-1)


def swap_halves(x):
    """Exchange the two feature halves (numpy or Tensor)."""
    if isinstance(x, Tensor):
        p = split_strands(x)
        return concat([p.minus, p.plus], axis=-1)
    d = x.shape[-1] // 2
    return np.concatenate([x[..., d:], x[..., :d]], axis=-1)


def layer_schedule(n_layers: int, attn_every: int | None) -> list[str]:
    """Groups of ``attn_every`` delta blocks closed by one attention block.

    A trailing incomplete group is all delta. ``attn_every=None`` gives an
    all-delta stack and ``0`` an all-attention one.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    if attn_every is None:
        return [DELTA] * n_layers
    group = attn_every + 1
    complete = (n_layers // group) * group
    return [ATTENTION if i < complete and i % group == attn_every else DELTA
            for i in range(n_layers)]


# -- parameter construction ---------------------------------------------------------
def init_delta_block(init: Initializer, prefix: str, dim: int, heads: int,
                     per_channel_gate: bool, short_conv: int, ffn_hidden: int,
                     layer_scale: float) -> dict:
    dh = dim // heads
    n_gate = heads * dh if per_channel_gate else heads
    p = {
        "norm1": init.const((dim,), 1.0),
        "wq": init.fan_in((dim, dim)),
        "wk": init.fan_in((dim, dim)),
        "wv": init.fan_in((dim, dim)),
        "conv_q": init.normal((short_conv, dim), 0.5),
        "conv_k": init.normal((short_conv, dim), 0.5),
        "conv_v": init.normal((short_conv, dim), 0.5),
        "w_alpha": init.fan_in((dim, n_gate)),
        "b_alpha": init.const((n_gate,), 2.0),
        "w_beta": init.fan_in((dim, heads)),
        "b_beta": init.const((heads,), 0.0),
        "w_gate": init.fan_in((dim, dim)),
        "wo": init.fan_in((dim, dim)),
        "ls1": init.const((dim,), layer_scale),
    }
    p.update(_init_ffn(init, dim, ffn_hidden, layer_scale))
    return {prefix + k: v for k, v in p.items()}


def init_attention_block(init: Initializer, prefix: str, dim: int, ffn_hidden: int,
                         layer_scale: float) -> dict:
    p = {
        "norm1": init.const((dim,), 1.0),
        "wq": init.fan_in((dim, dim)),
        "wk": init.fan_in((dim, dim)),
        "wv": init.fan_in((dim, dim)),
        "wo": init.fan_in((dim, dim)),
        "ls1": init.const((dim,), layer_scale),
    }
    p.update(_init_ffn(init, dim, ffn_hidden, layer_scale))
    return {prefix + k: v for k, v in p.items()}


def _init_ffn(init: Initializer, dim: int, hidden: int, layer_scale: float) -> dict:
    return {
        "norm2": init.const((dim,), 1.0),
        "w1": init.fan_in((dim, hidden)),
        "w2": init.fan_in((dim, hidden)),
        "w3": init.fan_in((hidden, dim)),
        "ls2": init.const((dim,), layer_scale),
    }


def init_encoder(cfg: EncoderConfig, init: Initializer, prefix: str = "encoder/") -> dict:
    cfg.validate()
    params = {}
    for i, kind in enumerate(layer_schedule(cfg.n_layers, cfg.attn_every)):
        pre = f"{prefix}layers.{i}."
        if kind == DELTA:
            params.update(init_delta_block(init, pre, cfg.strand_dim, cfg.heads, cfg.per_channel_gate,
                                           cfg.short_conv, cfg.ffn_hidden, cfg.layer_scale_init))
        else:
            params.update(init_attention_block(init, pre, cfg.strand_dim, cfg.ffn_hidden,
                                               cfg.layer_scale_init))
    return params


# -- blocks ---------------------------------------------------------------------------
def _split_heads(x: Tensor, heads: int) -> Tensor:
    b, length, d = x.shape
    return transpose(reshape(x, (b, length, heads, d // heads)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    b, h, length, dh = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (b, length, h * dh))


def short_causal_conv(x: Tensor, weight: Tensor) -> Tensor:
    """Depthwise causal convolution over the sequence axis; ``weight`` is (K, C)."""
    return causal_depthwise_conv(x, weight)


def _ffn(mod: ParamModule, pre: str, x: Tensor, eps: float) -> Tensor:
    h = rmsnorm(x, mod.p(pre + "norm2"), eps)
    hidden = mod.linear(pre + "w1", h) * silu(mod.linear(pre + "w2", h))
    return x + mod.linear(pre + "w3", hidden) * mod.p(pre + "ls2")


def delta_block(mod: ParamModule, pre: str, x: Tensor, nonpad: np.ndarray, heads: int,
                impl: str = "chunkwise", chunk: int = 32, eps: float = 1e-6) -> Tensor:
    """Gated delta token mixer plus SwiGLU channel block, both pre-norm residual.

    ``x`` is (B, L, dim); ``nonpad`` (B, L) marks real positions. Padded
    steps get a zero write strength.
    """
    b, length, dim = x.shape
    dh = dim // heads
    h = rmsnorm(x, mod.p(pre + "norm1"), eps)
    q = silu(short_causal_conv(mod.linear(pre + "wq", h), mod.p(pre + "conv_q")))
    k = silu(short_causal_conv(mod.linear(pre + "wk", h), mod.p(pre + "conv_k")))
    v = silu(short_causal_conv(mod.linear(pre + "wv", h), mod.p(pre + "conv_v")))
    q = _split_heads(q, heads) * (dh ** -0.5)
    k = l2_normalize(_split_heads(k, heads))
    v = _split_heads(v, heads)
    alpha = sigmoid(mod.linear(pre + "w_alpha", h, bias=pre + "b_alpha"))
    n_gate = alpha.shape[-1] // heads
    alpha = transpose(reshape(alpha, (b, length, heads, n_gate)), (0, 2, 1, 3))
    beta = sigmoid(mod.linear(pre + "w_beta", h, bias=pre + "b_beta"))
    beta = beta * np.asarray(nonpad, dtype=x.dtype)[..., None]
    beta = reshape(transpose(beta, (0, 2, 1)), (b, heads, length, 1))
    if impl == "recurrent":
        o = delta_rule_recurrent(q, k, v, alpha, beta)
    else:
        o = delta_rule_chunkwise(q, k, v, alpha, beta, chunk=chunk)
    o = _merge_heads(o) * silu(mod.linear(pre + "w_gate", h))
    x = x + mod.linear(pre + "wo", o) * mod.p(pre + "ls1")
    return _ffn(mod, pre, x, eps)


def attention_block(mod: ParamModule, pre: str, x: Tensor, nonpad: np.ndarray, heads: int,
                    rope_base: float = 10000.0, eps: float = 1e-6) -> Tensor:
    """Bidirectional multi-head softmax attention with RoPE plus SwiGLU block."""
    b, length, dim = x.shape
    h = rmsnorm(x, mod.p(pre + "norm1"), eps)
    pos = np.arange(length)
    q = rope_apply(_split_heads(mod.linear(pre + "wq", h), heads), pos, base=rope_base)
    k = rope_apply(_split_heads(mod.linear(pre + "wk", h), heads), pos, base=rope_base)
    v = _split_heads(mod.linear(pre + "wv", h), heads)
    o = attention(q, k, v, key_mask=np.asarray(nonpad, dtype=bool)[:, None, :])
    x = x + mod.linear(pre + "wo", _merge_heads(o)) * mod.p(pre + "ls1")
    return _ffn(mod, pre, x, eps)


class Encoder(ParamModule):
    """Shared-weight per-strand stack.

    ``encode`` runs the forward strand as given and the reverse strand with
    positions flipped, then flips it back so both halves stay aligned.
    """

    def __init__(self, cfg: EncoderConfig, params: dict, adapters: dict | None = None,
                 prefix: str = "encoder/"):
        super().__init__(params, adapters)
        cfg.validate()
        self.cfg = cfg
        self.prefix = prefix
        self.schedule = layer_schedule(cfg.n_layers, cfg.attn_every)

    def stack(self, x: Tensor, nonpad: np.ndarray) -> Tensor:
        cfg = self.cfg
        for i, kind in enumerate(self.schedule):
            pre = f"{self.prefix}layers.{i}."
            if kind == DELTA:
                x = delta_block(self, pre, x, nonpad, cfg.heads, cfg.delta_impl,
                                cfg.delta_chunk, cfg.norm_eps)
            else:
                x = attention_block(self, pre, x, nonpad, cfg.heads, cfg.rope_base, cfg.norm_eps)
        return x

    def encode(self, E, nonpad=None) -> Tensor:
        """(B, L, D) or (L, D) embeddings to fused hidden states of the same shape."""
        E = as_tensor(E)
        unbatched = E.ndim == 2
        if unbatched:
            E = reshape(E, (1, *E.shape))
        b, length, d = E.shape
        if d != self.cfg.model_dim:
            raise OddDim(f"expected model_dim {self.cfg.model_dim}, got {d}")
        mask = np.ones((b, length), dtype=bool) if nonpad is None else np.asarray(nonpad, dtype=bool)
        mask = mask.reshape(b, length)
        plus, minus = split_strands(E)
        x = concat([plus, reverse(minus, axis=-2)], axis=0)
        both = np.concatenate([mask, mask[:, ::-1]], axis=0)
        x = self.stack(x, both)
        h_plus = slice_axis(x, 0, b, axis=0)
        h_minus = reverse(slice_axis(x, b, 2 * b, axis=0), axis=-2)
        H = fuse_strands(StrandPair(h_plus, h_minus))
        return reshape(H, H.shape[1:]) if unbatched else H


def strand_reverse(E):
    """The double-helix map R(E) = reverse_positions(swap_halves(E)) on (..., L, D)."""
    if isinstance(E, Tensor):
        return reverse(swap_halves(E), axis=-2)
    return np.flip(swap_halves(np.asarray(E)), axis=-2).copy()
