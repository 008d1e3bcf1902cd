"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


def _relative_error(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b), 1e-8)


def grad_check(f: Callable, inputs, eps: float = 1e-5, max_entries: int | None = None,
               seed: int = 0, stencil: int = 2) -> float:
    """Max relative error between autodiff and central differences.

    Parameters
    ----------
    f : callable
        Maps the input tensors to a scalar :class:`Tensor`.
    inputs : Tensor or sequence of Tensor
        float64 tensors with ``requires_grad=True``. They are perturbed in
        place and restored.
    max_entries : int, optional
        Check at most this many randomly chosen entries per input.
    stencil : {2, 4}
        Points in the central difference. The four-point rule has O(eps^4)
        truncation error, which allows a larger ``eps`` (around 1e-3) and so
        less round-off on losses whose gradients are small.
    """
    if stencil not in (2, 4):
        raise ValueError("stencil must be 2 or 4")
    single = isinstance(inputs, Tensor)
    xs: Sequence[Tensor] = [inputs] if single else list(inputs)
    for x in xs:
        if x.dtype != np.float64:
            raise TypeError("grad_check requires float64 inputs")
        x.grad = None
    out = f(xs[0]) if single else f(*xs)
    out.backward()
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in xs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    with no_grad():
        for x, ga in zip(xs, analytic):
            flat = x.data.reshape(-1)
            idx = np.arange(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = rng.choice(flat.size, size=max_entries, replace=False)
            for i in idx:
                orig = flat[i]

                def at(delta):
                    flat[i] = orig + delta
                    return float((f(xs[0]) if single else f(*xs)).data)

                if stencil == 2:
                    numeric = (at(eps) - at(-eps)) / (2 * eps)
                else:
                    numeric = (8 * (at(eps) - at(-eps)) - (at(2 * eps) - at(-2 * eps))) / (12 * eps)
                flat[i] = orig
                worst = max(worst, _relative_error(float(ga.reshape(-1)[i]), numeric))
    return worst
