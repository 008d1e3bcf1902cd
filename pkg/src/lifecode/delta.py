"""Gated delta rule token mixing.

State ``S`` has shape (d_v, d_k) per head and evolves as::

    S_t = S_{t-1} diag(a_t) (I - b_t k_t k_t^T) + b_t v_t k_t^T
    o_t = S_t q_t

``a_t`` is either one decay per head (last axis of size 1) or one per key
channel. Two implementations are provided: a step-by-step recurrence with a
hand-written backward pass, and a chunked form built from differentiable
primitives. They compute the same function.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatch
from .numerics.tensor import (
    Tensor,
    _node,
    as_tensor,
    concat,
    cumsum,
    exp,
    log,
    matmul,
    pad_axis,
    reshape,
    slice_axis,
    solve,
    sum_,
    swapaxes,
)


def _check_shapes(q, k, v, alpha, beta):
    *lead, length, dk = k.shape
    if q.shape != k.shape:
        raise ShapeMismatch(f"q {q.shape} and k {k.shape} differ")
    if v.shape[:-1] != k.shape[:-1]:
        raise ShapeMismatch(f"v {v.shape} does not match k {k.shape}")
    if alpha.shape[:-1] != k.shape[:-1] or alpha.shape[-1] not in (1, dk):
        raise ShapeMismatch(f"alpha {alpha.shape} must be (..., L, 1) or (..., L, {dk})")
    if beta.shape != (*k.shape[:-1], 1):
        raise ShapeMismatch(f"beta {beta.shape} must be (..., L, 1)")


def delta_rule_recurrent(q, k, v, alpha, beta, return_states: bool = False):
    """Step-by-step gated delta rule.

    Shapes: q, k (..., L, d_k); v (..., L, d_v); alpha (..., L, 1 | d_k);
    beta (..., L, 1). Returns o (..., L, d_v) and, with ``return_states``,
    also the numpy array of states (..., L + 1, d_v, d_k) starting at zero.
    """
    q, k, v, alpha, beta = (as_tensor(t) for t in (q, k, v, alpha, beta))
    _check_shapes(q, k, v, alpha, beta)
    qd, kd, vd, ad, bd = q.data, k.data, v.data, alpha.data, beta.data
    *lead, length, dk = kd.shape
    dv = vd.shape[-1]
    dtype = np.result_type(qd, kd, vd, ad, bd)
    states = np.zeros((*lead, length + 1, dv, dk), dtype=dtype)
    out = np.empty((*lead, length, dv), dtype=dtype)
    for t in range(length):
        a = ad[..., t, None, :]                      # (..., 1, dk|1)
        x = states[..., t, :, :] * a                  # S_{t-1} diag(a)
        kt = kd[..., t, :]
        xk = np.einsum("...vk,...k->...v", x, kt)
        b = bd[..., t, :]                             # (..., 1)
        delta = b * (vd[..., t, :] - xk)
        states[..., t + 1, :, :] = x + delta[..., :, None] * kt[..., None, :]
        out[..., t, :] = np.einsum("...vk,...k->...v", states[..., t + 1, :, :], qd[..., t, :])

    def backward(g):
        gq = np.empty_like(qd)
        gk = np.empty_like(kd)
        gv = np.empty_like(vd)
        ga = np.empty_like(ad)
        gb = np.empty_like(bd)
        gs = np.zeros((*lead, dv, dk), dtype=dtype)
        for t in range(length - 1, -1, -1):
            s_new = states[..., t + 1, :, :]
            s_old = states[..., t, :, :]
            gt = g[..., t, :]
            qt, kt, vt = qd[..., t, :], kd[..., t, :], vd[..., t, :]
            a = ad[..., t, None, :]
            b = bd[..., t, :]
            gq[..., t, :] = np.einsum("...vk,...v->...k", s_new, gt)
            gs = gs + gt[..., :, None] * qt[..., None, :]
            x = s_old * a
            xk = np.einsum("...vk,...k->...v", x, kt)
            gsk = np.einsum("...vk,...k->...v", gs, kt)
            gv[..., t, :] = b * gsk
            gb[..., t, :] = np.einsum("...v,...v->...", gsk, vt - xk)[..., None]
            # S_t = X (I - b k k^T) + b v k^T with X = S_{t-1} diag(a)
            gx = gs - b[..., None] * gsk[..., :, None] * kt[..., None, :]
            gk[..., t, :] = b * (
                np.einsum("...vk,...v->...k", gs, vt)
                - np.einsum("...vk,...v->...k", gs, xk)
                - np.einsum("...vk,...v->...k", x, gsk)
            )
            gax = gx * s_old
            if ad.shape[-1] == 1:
                ga[..., t, :] = gax.sum(axis=(-1, -2))[..., None]
            else:
                ga[..., t, :] = gax.sum(axis=-2)
            gs = gx * a
        return gq, gk, gv, ga, gb

    o = _node(out, (q, k, v, alpha, beta), backward)
    return (o, states) if return_states else o


def _chunk_view(t: Tensor, n: int, c: int) -> Tensor:
    *lead, _, d = t.shape
    return reshape(t, (*lead, n, c, d))


def delta_rule_chunkwise(q, k, v, alpha, beta, chunk: int = 16) -> Tensor:
    """Chunked gated delta rule.

    Within a chunk the rank-one writes are resolved jointly through a unit
    lower-triangular solve; the state is carried between chunks. Sequences
    are padded to a whole number of chunks with non-writing, non-decaying
    steps, which leaves earlier outputs unchanged.
    """
    q, k, v, alpha, beta = (as_tensor(t) for t in (q, k, v, alpha, beta))
    _check_shapes(q, k, v, alpha, beta)
    *lead, length, dk = k.shape
    dv = v.shape[-1]
    c = max(1, min(chunk, length))
    n = -(-length // c)
    extra = n * c - length
    if extra:
        q, k, v, beta = (pad_axis(t, 0, extra, axis=-2) for t in (q, k, v, beta))
        alpha = pad_axis(alpha, 0, extra, axis=-2, value=1.0)
    dtype = np.result_type(q.dtype, k.dtype)

    g = cumsum(_chunk_view(log(alpha), n, c), axis=-2)      # (..., n, c, 1|dk)
    K, Q, V = _chunk_view(k, n, c), _chunk_view(q, n, c), _chunk_view(v, n, c)
    B = _chunk_view(beta, n, c)                            # (..., n, c, 1)
    incl = np.tril(np.ones((c, c), dtype=dtype))
    strict = np.tril(np.ones((c, c), dtype=dtype), -1)
    g_last = slice_axis(g, c - 1, c, axis=-2)               # (..., n, 1, 1|dk)

    if alpha.shape[-1] == 1:
        gv = reshape(g, (*g.shape[:-1],))                     # (..., n, c)
        diff = reshape(gv, (*gv.shape, 1)) - reshape(gv, (*gv.shape[:-1], 1, c))
        decay = exp(diff * incl) * incl                        # (..., n, c, c)
        kk = matmul(K, swapaxes(K, -1, -2)) * decay
        P = matmul(Q, swapaxes(K, -1, -2)) * decay
    else:
        diff = reshape(g, (*g.shape[:-1], 1, dk)) - reshape(g, (*g.shape[:-2], 1, c, dk))
        m3 = incl[:, :, None]
        decay = exp(diff * m3) * m3                            # (..., n, c, c, dk)
        Ki = reshape(K, (*K.shape[:-1], 1, dk))
        Kj = reshape(K, (*K.shape[:-2], 1, c, dk))
        kk = sum_(Ki * Kj * decay, axis=-1)
        P = sum_(reshape(Q, (*Q.shape[:-1], 1, dk)) * Kj * decay, axis=-1)
    A = kk * B * strict
    eye = np.eye(c, dtype=dtype)
    T = A + eye
    U = solve(T, V * B)                                        # (..., n, c, dv)
    W = solve(T, K * exp(g) * B)                               # (..., n, c, dk)
    Qg = Q * exp(g)
    Khat = K * exp(g_last - g)
    decay_last = exp(g_last)                                   # (..., n, 1, 1|dk)

    S = Tensor(np.zeros((*lead, dv, dk), dtype=dtype))
    outs = []
    for i in range(n):
        Ui = slice_axis(U, i, i + 1, axis=-3)
        Wi = slice_axis(W, i, i + 1, axis=-3)
        Si = reshape(S, (*lead, 1, dv, dk))
        St = swapaxes(Si, -1, -2)
        Di = Ui - matmul(Wi, St)
        Oi = matmul(slice_axis(Qg, i, i + 1, axis=-3), St) + matmul(slice_axis(P, i, i + 1, axis=-3), Di)
        outs.append(Oi)
        if i + 1 < n:
            Si = Si * slice_axis(decay_last, i, i + 1, axis=-3) + matmul(
                swapaxes(Di, -1, -2), slice_axis(Khat, i, i + 1, axis=-3))
            S = reshape(Si, (*lead, dv, dk))
    O = concat(outs, axis=-3) if n > 1 else outs[0]
    O = reshape(O, (*lead, n * c, dv))
    return slice_axis(O, 0, length, axis=-2) if extra else O
