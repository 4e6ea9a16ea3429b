"""Compiled inner loops of the LSTM recurrence.

Only the per-step elementwise work lives here; matrix products go through
``np.dot`` (BLAS).  Gate blocks are ordered i, f, c, o along the last axis.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, inline="always")
def _sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _tanh(x):
    e = math.exp(-2.0 * abs(x))
    r = (1.0 - e) / (1.0 + e)
    return r if x >= 0.0 else -r


@njit(cache=True)
def lstm_forward(zx, WhT, w_c, h_all, c_all, gates, tanh_c):
    """Fill h_all[1:], c_all[1:], gates and tanh_c; zx already holds W_x x + b."""
    T, B, H4 = zx.shape
    H = H4 // 4
    for t in range(T):
        z = np.dot(h_all[t], WhT)
        for b in range(B):
            for j in range(H):
                cp = c_all[t, b, j]
                i = _sigmoid(z[b, j] + zx[t, b, j] + w_c[j] * cp)
                f = _sigmoid(z[b, H + j] + zx[t, b, H + j] + w_c[H + j] * cp)
                a = _tanh(z[b, 2 * H + j] + zx[t, b, 2 * H + j])
                c = f * cp + i * a
                o = _sigmoid(z[b, 3 * H + j] + zx[t, b, 3 * H + j] + w_c[2 * H + j] * c)
                tc = _tanh(c)
                gates[t, b, j] = i
                gates[t, b, H + j] = f
                gates[t, b, 2 * H + j] = a
                gates[t, b, 3 * H + j] = o
                c_all[t + 1, b, j] = c
                tanh_c[t, b, j] = tc
                h_all[t + 1, b, j] = o * tc


@njit(cache=True)
def lstm_backward(dh_out, gates, c_all, tanh_c, w_c, Wh, dZ):
    """Fill dZ (gradients w.r.t. gate pre-activations) by reverse sweep."""
    T, B, H = dh_out.shape
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                i = gates[t, b, j]
                f = gates[t, b, H + j]
                a = gates[t, b, 2 * H + j]
                o = gates[t, b, 3 * H + j]
                cp = c_all[t, b, j]
                tc = tanh_c[t, b, j]
                dh = dh_out[t, b, j] + dh_next[b, j]
                dzo = dh * tc * o * (1.0 - o)
                dc = dc_next[b, j] + dh * o * (1.0 - tc * tc) + dzo * w_c[2 * H + j]
                dzi = dc * a * i * (1.0 - i)
                dzf = dc * cp * f * (1.0 - f)
                dza = dc * i * (1.0 - a * a)
                dc_next[b, j] = dc * f + dzi * w_c[j] + dzf * w_c[H + j]
                dZ[t, b, j] = dzi
                dZ[t, b, H + j] = dzf
                dZ[t, b, 2 * H + j] = dza
                dZ[t, b, 3 * H + j] = dzo
        dh_next = np.dot(dZ[t], Wh)


@njit(cache=True)
def lstm_infer(x, WxT, WhT, bias, w_c, out, last_only):
    """Tape-free forward; writes h_t into out[t] (or only the final h into out[0])."""
    T, B, _ = x.shape
    H = WhT.shape[0]
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    for t in range(T):
        z = np.dot(x[t], WxT) + np.dot(h, WhT)
        for b in range(B):
            for j in range(H):
                cp = c[b, j]
                i = _sigmoid(z[b, j] + bias[j] + w_c[j] * cp)
                f = _sigmoid(z[b, H + j] + bias[H + j] + w_c[H + j] * cp)
                a = _tanh(z[b, 2 * H + j] + bias[2 * H + j])
                cn = f * cp + i * a
                o = _sigmoid(z[b, 3 * H + j] + bias[3 * H + j] + w_c[2 * H + j] * cn)
                c[b, j] = cn
                h[b, j] = o * _tanh(cn)
        if not last_only:
            out[t] = h
    if last_only:
        out[0] = h
