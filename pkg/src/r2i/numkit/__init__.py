"""Differentiable dense-array substrate."""

from .complex import ComplexPair, complex_matmul, complex_mul, real_matmul, take_real
from .gradcheck import NonDeterministicError, finite_diff_check
from .nn import MLP, LayerNorm, Linear, Module
from .optim import Adam, clip_by_global_norm, global_norm
from .tensor import (
    FORWARD_OPS,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    forward_op,
    gelu,
    getitem,
    grad_enabled,
    layernorm,
    log,
    log_softmax,
    matmul,
    maximum,
    mean,
    mul,
    neg,
    no_grad,
    reshape,
    sigmoid,
    silu,
    slice_,
    softmax,
    stack,
    stop_gradient,
    straight_through,
    sub,
    sum_,
    swapaxes,
    tanh,
    transparent_stop_gradient,
)
