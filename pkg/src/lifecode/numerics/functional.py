"""Neural-network operators built on :mod:`lifecode.numerics.tensor`.

Layouts put the sequence axis second to last and features last, so every
operator accepts arbitrary leading batch dimensions.
"""

from __future__ import annotations

import numpy as np

from ..errors import (
    AllIgnored,
    LengthNotMultipleOfThree,
    OddHeadDim,
    ShapeMismatch,
    TargetOutOfRange,
)
from .tensor import (
    Tensor,
    _node,
    _sigmoid,
    as_tensor,
    log_softmax,
    matmul,
    mean,
    mul,
    reserve_bytes,
    reshape,
    silu,
    sqrt,
    sum_,
    track_array,
    unbroadcast,
)

IGNORE_INDEX = -100


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    y = matmul(x, weight)
    return y if bias is None else y + bias


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (..., L, C_in) with ``weight`` (k, C_in, C_out)."""
    x = as_tensor(x)
    k, c_in, c_out = weight.shape
    if x.shape[-1] != c_in:
        raise ShapeMismatch(f"conv1d expects {c_in} input channels, got {x.shape[-1]}")
    length = x.shape[-2]
    out_len = (length + 2 * padding - k) // stride + 1
    if out_len < 1:
        raise ShapeMismatch(f"conv1d output length {out_len} < 1")
    lead = x.shape[:-2]
    widths = [(0, 0)] * (x.ndim - 2) + [(padding, padding), (0, 0)]
    xp = np.pad(x.data, widths)
    # cols[..., t, j, c] = xp[..., stride*t + j, c]
    cols = np.stack([xp[..., j:j + stride * (out_len - 1) + 1:stride, :] for j in range(k)], axis=-2)
    w2 = weight.data.reshape(k * c_in, c_out)
    out = cols.reshape(*lead, out_len, k * c_in) @ w2

    def backward(g):
        gcols = (g @ w2.T).reshape(*lead, out_len, k, c_in)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[..., j:j + stride * (out_len - 1) + 1:stride, :] += gcols[..., j, :]
        gx = gxp[..., padding:padding + length, :]
        flat_cols = cols.reshape(-1, k * c_in)
        gw = (flat_cols.T @ g.reshape(-1, c_out)).reshape(k, c_in, c_out)
        return gx, gw

    y = _node(out, (x, weight), backward)
    return y if bias is None else y + bias


def causal_depthwise_conv(x: Tensor, weight: Tensor) -> Tensor:
    """Per-channel causal convolution of ``x`` (..., L, C) with ``weight`` (K, C).

    ``y[t] = sum_j weight[j] * x[t - K + 1 + j]`` with zeros before the start.
    """
    x = as_tensor(x)
    width, channels = weight.shape
    if x.shape[-1] != channels:
        raise ShapeMismatch(f"depthwise conv expects {channels} channels, got {x.shape[-1]}")
    length = x.shape[-2]
    widths = [(0, 0)] * (x.ndim - 2) + [(width - 1, 0), (0, 0)]
    xd, wd = x.data, weight.data
    xp = np.pad(xd, widths)
    out = np.zeros(xd.shape, dtype=np.result_type(xd, wd))
    for j in range(width):
        out += xp[..., j:j + length, :] * wd[j]

    def backward(g):
        gp = np.pad(g, [(0, 0)] * (g.ndim - 2) + [(0, width - 1), (0, 0)])
        gx = np.zeros_like(xd)
        gw = np.empty_like(wd)
        flat_g = g.reshape(-1, channels)
        for j in range(width):
            # y[t] uses x[t + j - K + 1], so x[s] receives g[s + K - 1 - j]
            gx += gp[..., width - 1 - j:width - 1 - j + length, :] * wd[j]
            gw[j] = (xp[..., j:j + length, :].reshape(-1, channels) * flat_g).sum(axis=0)
        return gx, gw

    return _node(out, (x, weight), backward)


def conv_transpose1d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
                     stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution; ``weight`` is (k, C_in, C_out).

    Output length is ``(L - 1) * stride - 2 * padding + k``.
    """
    x = as_tensor(x)
    k, c_in, c_out = weight.shape
    if x.shape[-1] != c_in:
        raise ShapeMismatch(f"conv_transpose1d expects {c_in} input channels, got {x.shape[-1]}")
    length = x.shape[-2]
    full_len = (length - 1) * stride + k
    out_len = full_len - 2 * padding
    if out_len < 1:
        raise ShapeMismatch(f"conv_transpose1d output length {out_len} < 1")
    lead = x.shape[:-2]
    span = stride * (length - 1) + 1
    full = np.zeros((*lead, full_len, c_out), dtype=np.result_type(x.dtype, weight.dtype))
    for j in range(k):
        full[..., j:j + span:stride, :] += x.data @ weight.data[j]
    out = full[..., padding:padding + out_len, :].copy()

    def backward(g):
        gfull = np.zeros_like(full)
        gfull[..., padding:padding + out_len, :] = g
        gx = np.zeros_like(x.data)
        gw = np.zeros_like(weight.data)
        xf = x.data.reshape(-1, c_in)
        for j in range(k):
            gj = gfull[..., j:j + span:stride, :]
            gx += gj @ weight.data[j].T
            gw[j] = xf.T @ gj.reshape(-1, c_out)
        return gx, gw

    y = _node(out, (x, weight), backward)
    return y if bias is None else y + bias


def unfold3(x: Tensor) -> Tensor:
    """Concatenate features of consecutive triplets: (..., L, d) -> (..., L/3, 3d)."""
    *lead, length, d = x.shape
    if length % 3:
        raise LengthNotMultipleOfThree(f"length {length} is not a multiple of 3")
    return reshape(x, (*lead, length // 3, 3 * d))


def fold3(y: Tensor) -> Tensor:
    """Exact inverse of :func:`unfold3`."""
    *lead, n, d3 = y.shape
    if d3 % 3:
        raise ShapeMismatch(f"feature size {d3} is not a multiple of 3")
    return reshape(y, (*lead, 3 * n, d3 // 3))


def rmsnorm(x: Tensor, gain: Tensor, eps: float = 1e-6) -> Tensor:
    """``x / sqrt(mean(x^2) + eps) * gain`` over the last axis."""
    x = as_tensor(x)
    ms = (x.data * x.data).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(ms + eps)
    xhat = x.data * inv
    d = x.shape[-1]

    def backward(g):
        gx_hat = g * gain.data
        gx = inv * (gx_hat - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True) / d)
        return gx, unbroadcast(g * xhat, gain.shape)

    return _node(xhat * gain.data, (x, gain), backward)


def swiglu(x: Tensor, w1: Tensor, w2: Tensor, w3: Tensor) -> Tensor:
    """``((x W1) * silu(x W2)) W3``."""
    if w1.shape != w2.shape or w1.shape[1] != w3.shape[0]:
        raise ShapeMismatch("inconsistent SwiGLU weight shapes")
    return matmul(mul(matmul(x, w1), silu(matmul(x, w2))), w3)


def l2_normalize(x: Tensor, eps: float = 1e-6) -> Tensor:
    return x / sqrt(sum_(x * x, axis=-1, keepdims=True) + eps)


def rope_angles(positions, head_dim: int, base: float = 10000.0) -> np.ndarray:
    if head_dim % 2:
        raise OddHeadDim(f"RoPE needs an even head dim, got {head_dim}")
    inv_freq = base ** (-np.arange(0, head_dim, 2, dtype=np.float64) / head_dim)
    return np.asarray(positions, dtype=np.float64)[:, None] * inv_freq[None, :]


def rope_apply(x: Tensor, positions, seq_axis: int = -2, base: float = 10000.0) -> Tensor:
    """Rotate interleaved feature pairs (2i, 2i+1) by ``position * theta_i``.

    ``seq_axis`` names the position axis (``-2`` for (..., L, d), ``-3`` for
    (L, heads, d)).
    """
    x = as_tensor(x)
    d = x.shape[-1]
    ang = rope_angles(positions, d, base)
    shape = [1] * (x.ndim - 1) + [d // 2]
    shape[seq_axis] = ang.shape[0]
    cos = np.cos(ang).reshape(shape).astype(x.dtype)
    sin = np.sin(ang).reshape(shape).astype(x.dtype)

    def rotate(v, s):
        pairs = v.reshape(*v.shape[:-1], d // 2, 2)
        a, b = pairs[..., 0], pairs[..., 1]
        return np.stack([a * cos - b * s, a * s + b * cos], axis=-1).reshape(v.shape)

    return _node(rotate(x.data, sin), (x,), lambda g: (rotate(g, -sin),))


def cross_entropy(logits: Tensor, targets, ignore_index: int = IGNORE_INDEX) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over rows whose target is not ignored."""
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    k = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeMismatch(f"targets {targets.shape} do not match logits {logits.shape}")
    flat_t = targets.reshape(-1)
    valid = flat_t != ignore_index
    if np.any((flat_t[valid] < 0) | (flat_t[valid] >= k)):
        raise TargetOutOfRange(f"targets must lie in [0, {k})")
    n = int(valid.sum())
    if n == 0:
        raise AllIgnored("every target is ignored")
    z = logits.data.reshape(-1, k)
    z = z - z.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    rows = np.nonzero(valid)[0]
    loss = -logp[rows, flat_t[rows]].sum() / n

    def backward(g):
        grad = np.exp(logp)
        grad[rows, flat_t[rows]] -= 1.0
        grad[~valid] = 0.0
        return ((g / n) * grad.reshape(logits.shape),)

    return _node(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def soft_cross_entropy(logits: Tensor, target_probs) -> Tensor:
    """Row mean of ``-p^T log softmax(logits)`` for fixed target distributions ``p``."""
    p = np.asarray(target_probs.data if isinstance(target_probs, Tensor) else target_probs)
    if p.shape != logits.shape:
        raise ShapeMismatch(f"target shape {p.shape} does not match logits {logits.shape}")
    per_row = -sum_(mul(log_softmax(logits, axis=-1), Tensor(p)), axis=-1)
    return mean(per_row)


def attention(q: Tensor, k: Tensor, v: Tensor, key_mask=None, scale: float | None = None) -> Tensor:
    """Exact softmax attention over (..., L, d) inputs.

    ``key_mask`` (broadcastable to (..., L_k)) marks keys that may be attended.
    Only the probability matrix is retained for the backward pass, and it is
    computed one leading slice at a time.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeMismatch("attention operand shapes are inconsistent")
    lead = np.broadcast_shapes(q.shape[:-2], k.shape[:-2], v.shape[:-2])
    lq, lk, dv = q.shape[-2], k.shape[-2], v.shape[-1]
    scale = q.shape[-1] ** -0.5 if scale is None else scale
    qd = np.broadcast_to(q.data, (*lead, *q.shape[-2:])).reshape(-1, lq, q.shape[-1])
    kd = np.broadcast_to(k.data, (*lead, *k.shape[-2:])).reshape(-1, lk, k.shape[-1])
    vd = np.broadcast_to(v.data, (*lead, *v.shape[-2:])).reshape(-1, lk, dv)
    if key_mask is None:
        mask = np.ones((qd.shape[0], lk), dtype=bool)
    else:
        mask = np.broadcast_to(np.asarray(key_mask, dtype=bool), (*lead, lk)).reshape(-1, lk)
    dtype = np.result_type(q.dtype, k.dtype, v.dtype)
    reserve_bytes(qd.shape[0] * lq * lk * dtype.itemsize)
    probs = np.empty((qd.shape[0], lq, lk), dtype=dtype)
    track_array(probs)
    out = np.empty((qd.shape[0], lq, dv), dtype=dtype)
    for i in range(qd.shape[0]):
        s = (qd[i] @ kd[i].T) * scale
        s = np.where(mask[i][None, :], s, -np.inf)
        m = s.max(axis=-1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        e = np.exp(s - m)
        z = e.sum(axis=-1, keepdims=True)
        probs[i] = e / np.where(z == 0, 1.0, z)
        out[i] = probs[i] @ vd[i]

    def backward(g):
        g = g.reshape(-1, lq, dv)
        gq = np.empty_like(qd)
        gk = np.empty_like(kd)
        gv = np.empty_like(vd)
        for i in range(qd.shape[0]):
            p = probs[i]
            gv[i] = p.T @ g[i]
            gp = g[i] @ vd[i].T
            gs = p * (gp - (gp * p).sum(axis=-1, keepdims=True))
            gq[i] = (gs @ kd[i]) * scale
            gk[i] = (gs.T @ qd[i]) * scale
        return (unbroadcast(gq.reshape(*lead, lq, -1), q.shape),
                unbroadcast(gk.reshape(*lead, lk, -1), k.shape),
                unbroadcast(gv.reshape(*lead, lk, dv), v.shape))

    return _node(out.reshape(*lead, lq, dv), (q, k, v), backward)


def attention_reference(q: Tensor, k: Tensor, v: Tensor, key_mask=None, scale=None) -> Tensor:
    """Unfused attention composed from matmul/softmax, used to pin :func:`attention`."""
    from .tensor import softmax, swapaxes, where

    scale = q.shape[-1] ** -0.5 if scale is None else scale
    s = matmul(q, swapaxes(k, -1, -2)) * scale
    if key_mask is not None:
        s = where(np.asarray(key_mask, dtype=bool)[..., None, :], s, -1e30)
    return matmul(softmax(s, axis=-1), v)


def sigmoid_np(x: np.ndarray) -> np.ndarray:
    return _sigmoid(x)
