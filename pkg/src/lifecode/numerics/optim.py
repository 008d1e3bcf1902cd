"""AdamW with decoupled weight decay, cosine schedule and gradient clipping."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatch, StepOutOfRange


@dataclass
class AdamWState:
    lr: float = 1e-4
    betas: tuple = (0.9, 0.98)
    weight_decay: float = 1e-2
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def clone(self) -> "AdamWState":
        return copy.deepcopy(self)


def adamw_step(params: dict, grads: dict, state: AdamWState, no_decay=()) -> dict:
    """One AdamW update.

    ``params`` and ``grads`` map names to arrays. Parameters without a
    gradient are returned untouched, and names in ``no_decay`` skip weight
    decay. ``state`` is advanced in place; the returned dict holds fresh
    arrays.
    """
    state.step += 1
    b1, b2 = state.betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = {}
    for name, w in params.items():
        g = grads.get(name)
        if g is None:
            out[name] = w
            continue
        if g.shape != w.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, expected {w.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(w)
            v = np.zeros_like(w)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name], state.v[name] = m, v
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        if name not in no_decay:
            update = update + state.weight_decay * w
        out[name] = (w - state.lr * update).astype(w.dtype, copy=False)
    return out


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for name in grads:
            grads[name] = grads[name] * scale
    return total


def cosine_lr(step: int, base_lr: float, warmup_steps: int, total_steps: int,
              min_lr: float = 1e-6) -> float:
    """Linear warmup to ``base_lr`` followed by cosine decay to ``min_lr``."""
    if not 0 <= step <= total_steps:
        raise StepOutOfRange(f"step {step} outside [0, {total_steps}]")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    if total_steps == warmup_steps:
        return base_lr
    t = (step - warmup_steps) / (total_steps - warmup_steps)
    return min_lr + (base_lr - min_lr) * (1.0 + math.cos(math.pi * t)) / 2.0
