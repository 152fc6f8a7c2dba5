"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``;
``dsmnas._kernels`` picks one at import time.
"""

import numpy as np

BACKEND = "python"


def hamming_rows(codes, ref):
    """Number of differing entries between each row of ``codes`` and ``ref``."""
    codes = np.asarray(codes, dtype=np.int64)
    ref = np.asarray(ref, dtype=np.int64)
    return np.count_nonzero(codes != ref[None, :], axis=1).astype(np.int64)


def hamming_pairs(a, b):
    """Row-wise number of differing entries between ``a`` and ``b``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    return np.count_nonzero(a != b, axis=1).astype(np.int64)


def additive_scores(index, unary, pairs, pair_tables, strength):
    """Sum of per-position utilities plus ``strength`` times pairwise terms.

    ``index`` holds candidate indices (not codes), shape (n, L).
    ``unary`` is (L, Cmax), ``pair_tables`` is (P, Cmax, Cmax) and ``pairs``
    is (P, 2).
    """
    index = np.asarray(index, dtype=np.int64)
    n, num_positions = index.shape
    out = unary[np.arange(num_positions)[None, :], index].sum(axis=1)
    for p in range(len(pairs)):
        i, j = pairs[p]
        out = out + strength * pair_tables[p, index[:, i], index[:, j]]
    return np.ascontiguousarray(out, dtype=np.float64)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_gates_forward(z, c_prev):
    """Gate nonlinearities of an LSTM step.

    ``z`` is the (4H,) pre-activation laid out as [input, forget, cell, output].
    Returns (h, c, cache) where cache is a (6, H) array
    [i, f, g, o, c_prev, tanh(c)] consumed by :func:`lstm_gates_backward`.
    """
    hidden = c_prev.shape[0]
    i = _sigmoid(z[:hidden])
    f = _sigmoid(z[hidden:2 * hidden])
    g = np.tanh(z[2 * hidden:3 * hidden])
    o = _sigmoid(z[3 * hidden:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = np.stack([i, f, g, o, c_prev, tc])
    return h, c, cache


def lstm_gates_backward(grad_h, grad_c, cache):
    """Returns (grad_z, grad_c_prev) for :func:`lstm_gates_forward`."""
    i, f, g, o, c_prev, tc = cache
    dc = grad_c + grad_h * o * (1.0 - tc * tc)
    dz = np.empty(4 * i.shape[0])
    hidden = i.shape[0]
    dz[:hidden] = dc * g * i * (1.0 - i)
    dz[hidden:2 * hidden] = dc * c_prev * f * (1.0 - f)
    dz[2 * hidden:3 * hidden] = dc * i * (1.0 - g * g)
    dz[3 * hidden:] = grad_h * tc * o * (1.0 - o)
    return dz, dc * f
