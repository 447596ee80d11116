"""Minimal reverse-mode automatic differentiation with AdamW and cosine annealing."""

from .gradcheck import gradcheck, numeric_grad, rel_error
from .ops import (
    add,
    clip,
    concat,
    div,
    dropout,
    dropout_mask,
    exp,
    gather_last,
    getitem,
    layer_norm,
    leaky_relu,
    log,
    log_softmax,
    l2_normalize,
    masked_mean,
    masked_softmax,
    matmul,
    mean,
    mul,
    reshape,
    sanitize,
    scale_shift,
    softmax,
    stack,
    sub,
    sum_,
    transpose,
    where,
)
from .optim import AdamW, CosineSchedule, adamw_step, cosine_lr
from .tensor import AutodiffError, Tensor, as_tensor, parameter
