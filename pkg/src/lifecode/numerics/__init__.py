"""Dense-tensor substrate: autodiff, operators, optimizer and schedule."""

from .functional import (
    IGNORE_INDEX,
    attention,
    attention_reference,
    causal_depthwise_conv,
    conv1d,
    conv_transpose1d,
    cross_entropy,
    fold3,
    l2_normalize,
    linear,
    rmsnorm,
    rope_apply,
    soft_cross_entropy,
    swiglu,
    unfold3,
)
from .gradcheck import grad_check
from .optim import AdamWState, adamw_step, clip_grad_norm, cosine_lr
from .tensor import (
    MemoryMeter,
    Tensor,
    add,
    as_tensor,
    broadcast_to,
    concat,
    cumsum,
    div,
    embedding_lookup,
    exp,
    getitem,
    log,
    log_softmax,
    matmul,
    mean,
    memory_budget,
    mul,
    neg,
    no_grad,
    pad_axis,
    power,
    reshape,
    reverse,
    sigmoid,
    silu,
    slice_axis,
    softmax,
    solve,
    sqrt,
    stack,
    sub,
    sum_,
    swapaxes,
    transpose,
    where,
)

__all__ = [name for name in dir() if not name.startswith("_")]
