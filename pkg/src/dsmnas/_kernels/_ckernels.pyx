# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh

cnp.import_array()

BACKEND = "cython"


def hamming_rows(codes, ref):
    cdef const long long[:, :] cv = np.ascontiguousarray(codes, dtype=np.int64)
    cdef const long long[:] rv = np.ascontiguousarray(ref, dtype=np.int64)
    cdef Py_ssize_t n = cv.shape[0], width = cv.shape[1], r, k
    out = np.zeros(n, dtype=np.int64)
    cdef long long[:] ov = out
    cdef long long count
    if rv.shape[0] != width:
        raise ValueError("row width and reference length differ")
    for r in range(n):
        count = 0
        for k in range(width):
            if cv[r, k] != rv[k]:
                count += 1
        ov[r] = count
    return out


def hamming_pairs(a, b):
    cdef const long long[:, :] av = np.ascontiguousarray(a, dtype=np.int64)
    cdef const long long[:, :] bv = np.ascontiguousarray(b, dtype=np.int64)
    cdef Py_ssize_t n = av.shape[0], width = av.shape[1], r, k
    if bv.shape[0] != n or bv.shape[1] != width:
        raise ValueError("shape mismatch")
    out = np.zeros(n, dtype=np.int64)
    cdef long long[:] ov = out
    cdef long long count
    for r in range(n):
        count = 0
        for k in range(width):
            if av[r, k] != bv[r, k]:
                count += 1
        ov[r] = count
    return out


def additive_scores(index, unary, pairs, pair_tables, double strength):
    cdef const long long[:, :] iv = np.ascontiguousarray(index, dtype=np.int64)
    cdef const double[:, :] uv = np.ascontiguousarray(unary, dtype=np.float64)
    cdef const long long[:, :] pv = np.ascontiguousarray(
        np.asarray(pairs, dtype=np.int64).reshape(-1, 2))
    cdef const double[:, :, :] wv = np.ascontiguousarray(
        pair_tables, dtype=np.float64).reshape(-1, uv.shape[1], uv.shape[1])
    cdef Py_ssize_t n = iv.shape[0], width = iv.shape[1], npairs = pv.shape[0]
    cdef Py_ssize_t r, k, p
    cdef double acc
    out = np.zeros(n, dtype=np.float64)
    cdef double[:] ov = out
    for r in range(n):
        acc = 0.0
        for k in range(width):
            acc += uv[k, iv[r, k]]
        for p in range(npairs):
            acc += strength * wv[p, iv[r, pv[p, 0]], iv[r, pv[p, 1]]]
        ov[r] = acc
    return out


cdef inline double _sig(double x) nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


def lstm_gates_forward(z, c_prev):
    cdef const double[:] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef const double[:] cpv = np.ascontiguousarray(c_prev, dtype=np.float64)
    cdef Py_ssize_t hidden = cpv.shape[0], k
    if zv.shape[0] != 4 * hidden:
        raise ValueError("pre-activation must have 4x the hidden size")
    h = np.empty(hidden)
    c = np.empty(hidden)
    cache = np.empty((6, hidden))
    cdef double[:] hv = h
    cdef double[:] cv = c
    cdef double[:, :] kv = cache
    cdef double gi, gf, gg, go, cc, tc
    for k in range(hidden):
        gi = _sig(zv[k])
        gf = _sig(zv[hidden + k])
        gg = tanh(zv[2 * hidden + k])
        go = _sig(zv[3 * hidden + k])
        cc = gf * cpv[k] + gi * gg
        tc = tanh(cc)
        hv[k] = go * tc
        cv[k] = cc
        kv[0, k] = gi
        kv[1, k] = gf
        kv[2, k] = gg
        kv[3, k] = go
        kv[4, k] = cpv[k]
        kv[5, k] = tc
    return h, c, cache


def lstm_gates_backward(grad_h, grad_c, cache):
    cdef const double[:] ghv = np.ascontiguousarray(grad_h, dtype=np.float64)
    cdef const double[:] gcv = np.ascontiguousarray(grad_c, dtype=np.float64)
    cdef const double[:, :] kv = np.ascontiguousarray(cache, dtype=np.float64)
    cdef Py_ssize_t hidden = kv.shape[1], k
    dz = np.empty(4 * hidden)
    dcp = np.empty(hidden)
    cdef double[:] dzv = dz
    cdef double[:] dcpv = dcp
    cdef double gi, gf, gg, go, cp, tc, dc
    for k in range(hidden):
        gi = kv[0, k]
        gf = kv[1, k]
        gg = kv[2, k]
        go = kv[3, k]
        cp = kv[4, k]
        tc = kv[5, k]
        dc = gcv[k] + ghv[k] * go * (1.0 - tc * tc)
        dzv[k] = dc * gg * gi * (1.0 - gi)
        dzv[hidden + k] = dc * cp * gf * (1.0 - gf)
        dzv[2 * hidden + k] = dc * gi * (1.0 - gg * gg)
        dzv[3 * hidden + k] = ghv[k] * tc * go * (1.0 - go)
        dcpv[k] = dc * gf
    return dz, dcp
