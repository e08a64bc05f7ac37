# cython: boundscheck=False, wraparound=False, cdivision=True
# Compiled tree mixing kernels. Same contracts and per-element arithmetic
# as _kernels_np.py (see its module docstring for the heap layout).

import numpy as np

BACKEND_NAME = "cython"


def mix_forward(double[:, ::1] alphas, unsigned char[:, ::1] drops,
                double[:, ::1] leaves):
    cdef Py_ssize_t B = alphas.shape[0]
    cdef Py_ssize_t ni = alphas.shape[1]
    cdef Py_ssize_t nl = leaves.shape[0]
    cdef Py_ssize_t o = leaves.shape[1]
    cdef Py_ssize_t nn = 2 * ni + 1

    out_arr = np.empty((B, nn, o))
    pw_arr = np.empty((B, nn))
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] pw = pw_arr
    cdef bint has_mask = drops is not None
    cdef Py_ssize_t b, i, j, k, li, ri
    cdef double a, p

    with nogil:
        for b in range(B):
            for j in range(nl):
                for k in range(o):
                    out[b, ni + j, k] = leaves[j, k]
            for i in range(ni - 1, -1, -1):
                li = 2 * i + 1
                ri = li + 1
                if has_mask and drops[b, i]:
                    for k in range(o):
                        out[b, i, k] = out[b, ri, k]
                else:
                    a = alphas[b, i]
                    for k in range(o):
                        out[b, i, k] = a * out[b, li, k] + (1.0 - a) * out[b, ri, k]
            pw[b, 0] = 1.0
            for i in range(ni):
                li = 2 * i + 1
                ri = li + 1
                p = pw[b, i]
                if has_mask and drops[b, i]:
                    pw[b, li] = 0.0
                    pw[b, ri] = p
                else:
                    a = alphas[b, i]
                    pw[b, li] = p * a
                    pw[b, ri] = p * (1.0 - a)
    return out_arr, pw_arr


def mix_backward(double[:, ::1] alphas, unsigned char[:, ::1] drops,
                 double[:, :, ::1] node_outputs, double[:, ::1] path_weights,
                 double[:, ::1] upstream):
    cdef Py_ssize_t B = alphas.shape[0]
    cdef Py_ssize_t ni = alphas.shape[1]
    cdef Py_ssize_t o = node_outputs.shape[2]

    coeff_arr = np.empty((B, ni))
    cdef double[:, ::1] coeff = coeff_arr
    cdef bint has_mask = drops is not None
    cdef Py_ssize_t b, i, k, li, ri
    cdef double s, a

    with nogil:
        for b in range(B):
            for i in range(ni):
                if has_mask and drops[b, i]:
                    coeff[b, i] = 0.0
                    continue
                li = 2 * i + 1
                ri = li + 1
                s = 0.0
                for k in range(o):
                    s += upstream[b, k] * (node_outputs[b, li, k] - node_outputs[b, ri, k])
                a = alphas[b, i]
                coeff[b, i] = s * a * (1.0 - a) * path_weights[b, i]
    return coeff_arr
