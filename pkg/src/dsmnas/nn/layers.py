"""Layer kit for the controller: dense, LSTM cell, categorical sampling."""

from __future__ import annotations

import numpy as np

from .tensor import (
    NonFiniteError,
    ShapeError,
    Tensor,
    add,
    concat,
    exp,
    lstm_gates,
    log_softmax,
    matmul,
    mul,
    scale,
    take,
    tensor_sum,
)


def dense(x, weight, bias=None) -> Tensor:
    y = matmul(weight, x)
    return add(y, bias) if bias is not None else y


def recurrent_cell(x, h, c, weight, bias):
    """One LSTM step; ``weight`` is (4H, in + H), gates ordered [i, f, g, o]."""
    hidden = h.shape[0]
    if weight.shape != (4 * hidden, x.shape[0] + hidden):
        raise ShapeError(f"LSTM weight {weight.shape} does not fit input {x.shape} and hidden {hidden}")
    z = add(matmul(weight, concat([x, h])), bias)
    return lstm_gates(z, c)


def categorical_sample(logits: Tensor, rng: np.random.Generator, forced: int | None = None):
    """Draw an index from softmax(logits).

    Returns (index, log_prob, entropy); log_prob and entropy are scalar
    tensors differentiable w.r.t. the logits. ``forced`` skips the draw and
    scores the given index instead.
    """
    if not np.all(np.isfinite(logits.value)):
        raise NonFiniteError("non-finite logits")
    logp = log_softmax(logits)
    probs = np.exp(logp.value)
    if forced is None:
        u = rng.random()
        index = int(np.searchsorted(np.cumsum(probs), u * probs.sum(), side="right"))
        index = min(index, len(probs) - 1)
    else:
        index = int(forced)
    log_prob = take(logp, index)
    entropy = scale(tensor_sum(mul(exp(logp), logp)), -1.0)
    return index, log_prob, entropy
