"""Named-parameter storage shared by the tokenizer, encoder and heads."""

from __future__ import annotations

import numpy as np

from .numerics.tensor import Tensor, matmul


class ParamModule:
    """A view onto a flat ``name -> Tensor`` dict, optionally with LoRA adapters.

    Submodules share the same dict; names carry ``tokenizer/``, ``encoder/``
    style prefixes so the whole model serializes as one mapping.
    """

    def __init__(self, params: dict, adapters: dict | None = None):
        self.params = params
        self.adapters = {} if adapters is None else adapters

    def p(self, name: str) -> Tensor:
        return self.params[name]

    def linear(self, name: str, x: Tensor, bias: str | None = None) -> Tensor:
        y = matmul(x, self.params[name])
        adapter = self.adapters.get(name)
        if adapter is not None:
            y = y + adapter.delta(x)
        if bias is not None:
            y = y + self.params[bias]
        return y


class Initializer:
    """Seeded parameter factory."""

    def __init__(self, seed: int, dtype="float64"):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)

    def _t(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.dtype), requires_grad=True)

    def normal(self, shape, std: float) -> Tensor:
        return self._t(self.rng.normal(0.0, std, size=shape))

    def fan_in(self, shape, fan: int | None = None) -> Tensor:
        fan = shape[-2] if fan is None else fan
        return self.normal(shape, 1.0 / np.sqrt(fan))

    def const(self, shape, value: float) -> Tensor:
        return self._t(np.full(shape, value))
