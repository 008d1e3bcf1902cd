"""Finite-difference cases for every differentiable operator (float64)."""

import numpy as np

from lifecode.delta import delta_rule_chunkwise, delta_rule_recurrent
from lifecode.numerics import functional as F
from lifecode.numerics import tensor as T
from lifecode.numerics.tensor import Tensor


def _t(rng, *shape, positive=False):
    x = rng.normal(size=shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x, requires_grad=True)


def _w(rng, shape):
    # fixed random readout so each case reduces to a scalar with dense gradients
    return rng.normal(size=shape)


def cases(seed=0):
    """``(name, f, inputs)`` triples; ``f`` maps the inputs to a scalar Tensor."""
    rng = np.random.default_rng(seed)
    out = []

    def add(name, f, inputs):
        w = _w(rng, f(*inputs).shape)
        out.append((name, lambda *xs, f=f, w=w: T.sum_(f(*xs) * w), inputs))

    add("add", lambda a, b: a + b, [_t(rng, 3, 4), _t(rng, 4)])
    add("sub", lambda a, b: a - b, [_t(rng, 3, 4), _t(rng, 3, 1)])
    add("mul", lambda a, b: a * b, [_t(rng, 2, 3, 4), _t(rng, 3, 4)])
    add("div", lambda a, b: a / b, [_t(rng, 3, 4), _t(rng, 3, 4, positive=True)])
    add("neg", lambda a: -a, [_t(rng, 5)])
    add("power", lambda a: T.power(a, 1.7), [_t(rng, 5, positive=True)])
    add("exp", T.exp, [_t(rng, 3, 4)])
    add("log", T.log, [_t(rng, 3, 4, positive=True)])
    add("sqrt", T.sqrt, [_t(rng, 3, 4, positive=True)])
    add("sigmoid", T.sigmoid, [_t(rng, 3, 4)])
    add("silu", T.silu, [_t(rng, 3, 4)])
    add("where", lambda a, b: T.where(np.arange(12).reshape(3, 4) % 3 == 0, a, b),
        [_t(rng, 3, 4), _t(rng, 3, 4)])
    add("sum_axis", lambda a: T.sum_(a, axis=1, keepdims=True), [_t(rng, 3, 4, 2)])
    add("mean", lambda a: T.mean(a, axis=(0, 2)), [_t(rng, 3, 4, 2)])
    add("cumsum", lambda a: T.cumsum(a, axis=-2), [_t(rng, 2, 5, 3)])
    add("reshape", lambda a: T.reshape(a, (6, 2)), [_t(rng, 3, 4)])
    add("transpose", lambda a: T.transpose(a, (2, 0, 1)), [_t(rng, 2, 3, 4)])
    add("swapaxes", lambda a: T.swapaxes(a, 0, 2), [_t(rng, 2, 3, 4)])
    add("broadcast_to", lambda a: T.broadcast_to(a, (3, 2, 4)), [_t(rng, 2, 1)])
    add("concat", lambda a, b: T.concat([a, b], axis=1), [_t(rng, 2, 3), _t(rng, 2, 2)])
    add("stack", lambda a, b: T.stack([a, b], axis=1), [_t(rng, 2, 3), _t(rng, 2, 3)])
    add("getitem", lambda a: T.getitem(a, np.array([0, 2, 2])), [_t(rng, 4, 3)])
    add("slice_axis", lambda a: T.slice_axis(a, 1, 3, axis=1), [_t(rng, 2, 5)])
    add("reverse", lambda a: T.reverse(a, axis=-2), [_t(rng, 2, 5, 3)])
    add("pad_axis", lambda a: T.pad_axis(a, 2, 1, axis=-2, value=0.3), [_t(rng, 2, 4, 3)])
    add("matmul", lambda a, b: T.matmul(a, b), [_t(rng, 2, 3, 4), _t(rng, 4, 5)])
    add("solve", lambda a, b: T.solve(a, b),
        [Tensor(np.eye(4) * 3 + rng.normal(size=(2, 4, 4)) * 0.3, requires_grad=True), _t(rng, 2, 4, 3)])
    add("softmax", lambda a: T.softmax(a, axis=-1), [_t(rng, 3, 5)])
    add("log_softmax", lambda a: T.log_softmax(a, axis=-1), [_t(rng, 3, 5)])
    add("embedding_lookup", lambda t: T.embedding_lookup(t, np.array([[0, 3, 3], [1, 0, 2]])),
        [_t(rng, 4, 3)])
    add("linear", lambda x, w, b: F.linear(x, w, b), [_t(rng, 2, 3, 4), _t(rng, 4, 5), _t(rng, 5)])
    add("conv1d", lambda x, w, b: F.conv1d(x, w, b, stride=1, padding=1),
        [_t(rng, 2, 7, 3), _t(rng, 3, 3, 4), _t(rng, 4)])
    add("conv1d_stride", lambda x, w: F.conv1d(x, w, stride=2, padding=0),
        [_t(rng, 2, 9, 3), _t(rng, 3, 3, 2)])
    add("conv_transpose1d", lambda x, w, b: F.conv_transpose1d(x, w, b, padding=1),
        [_t(rng, 2, 6, 3), _t(rng, 3, 3, 4), _t(rng, 4)])
    add("causal_depthwise_conv", F.causal_depthwise_conv, [_t(rng, 2, 7, 3), _t(rng, 4, 3)])
    add("unfold3", F.unfold3, [_t(rng, 2, 6, 4)])
    add("fold3", F.fold3, [_t(rng, 2, 2, 12)])
    add("rmsnorm", lambda x, g: F.rmsnorm(x, g), [_t(rng, 3, 6), _t(rng, 6)])
    add("swiglu", F.swiglu, [_t(rng, 3, 4), _t(rng, 4, 6), _t(rng, 4, 6), _t(rng, 6, 4)])
    add("l2_normalize", F.l2_normalize, [_t(rng, 3, 5)])
    add("rope_apply", lambda x: F.rope_apply(x, np.arange(5)), [_t(rng, 2, 5, 6)])
    targets = np.array([1, 4, -100, 0, 2])
    out.append(("cross_entropy", lambda z: F.cross_entropy(z, targets), [_t(rng, 5, 6)]))
    probs = rng.dirichlet(np.ones(6), size=4)
    out.append(("soft_cross_entropy", lambda z: F.soft_cross_entropy(z, probs), [_t(rng, 4, 6)]))
    mask = np.array([[True, True, False, True, True]])
    add("attention", lambda q, k, v: F.attention(q, k, v, key_mask=mask),
        [_t(rng, 2, 5, 4), _t(rng, 2, 5, 4), _t(rng, 2, 5, 3)])

    def delta_case(fn, per_channel):
        # every input flows through projections of one shared sequence, so no
        # checked entry has a structurally zero gradient (alpha at t=0 would)
        dk = 4

        def f(x, wq, wk, wv, wa, wb):
            q, k, v = T.matmul(x, wq), F.l2_normalize(T.matmul(x, wk)), T.matmul(x, wv)
            return fn(q, k, v, T.sigmoid(T.matmul(x, wa)), T.sigmoid(T.matmul(x, wb)))

        return f, [_t(rng, 1, 2, 9, 5), _t(rng, 5, dk), _t(rng, 5, dk), _t(rng, 5, 3),
                   _t(rng, 5, dk if per_channel else 1), _t(rng, 5, 1)]

    for per_channel in (False, True):
        tag = "per_channel" if per_channel else "scalar"
        add(f"delta_recurrent_{tag}", *delta_case(delta_rule_recurrent, per_channel))
        add(f"delta_chunkwise_{tag}", *delta_case(lambda *x: delta_rule_chunkwise(*x, chunk=4), per_channel))
    return out
