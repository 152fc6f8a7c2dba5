"""Minimal reverse-mode autodiff and the layers the controller needs."""

from .layers import categorical_sample, dense, recurrent_cell
from .optim import (
    ParamStore,
    adam_step,
    clip_global_norm,
    global_norm,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import (
    NonFiniteError,
    ShapeError,
    Tape,
    Tensor,
    add,
    add_n,
    concat,
    exp,
    gather_concat,
    log,
    log_softmax,
    lstm_gates,
    matmul,
    mul,
    relu,
    scale,
    sigmoid,
    softmax,
    stack_mean,
    sub,
    take,
    tanh,
    tensor_mean,
    tensor_sum,
)
