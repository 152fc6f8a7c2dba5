"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .tensor import Tape


def numeric_gradient(fn, arrays: dict, name: str, step: float = 1e-4) -> np.ndarray:
    """d fn / d arrays[name] by central differences; ``fn`` maps arrays to a float."""
    base = arrays[name]
    grad = np.zeros_like(base)
    for idx in np.ndindex(base.shape):
        orig = base[idx]
        base[idx] = orig + step
        plus = fn(arrays)
        base[idx] = orig - step
        minus = fn(arrays)
        base[idx] = orig
        grad[idx] = (plus - minus) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_gradients(build, arrays: dict, step: float = 1e-4) -> dict:
    """Relative error of tape gradients vs central differences, per input.

    ``build(P)`` receives a dict of tensors and returns a scalar tensor.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}

    def scalar(arrs):
        tape = Tape()
        return float(build(tape.watch(arrs)).value)

    tape = Tape()
    P = tape.watch(arrays)
    out = build(P)
    tape.backward(out)
    analytic = tape.gradients(P)
    return {k: relative_error(analytic[k], numeric_gradient(scalar, arrays, k, step)) for k in arrays}
