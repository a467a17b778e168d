"""Numba-compiled kernel implementations (default path).

Same contracts as numpy_impl. fastmath only reorders accumulation; results
are deterministic run-to-run within one environment.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _conv2d_forward(xp, kernel, bias, stride, out):
    ho, wo, cout = out.shape
    kh, kw, cin, _ = kernel.shape
    for i in range(ho):
        for j in range(wo):
            for c in range(cout):
                out[i, j, c] = bias[c]
            for a in range(kh):
                for b in range(kw):
                    for ci in range(cin):
                        v = xp[i * stride + a, j * stride + b, ci]
                        for c in range(cout):
                            out[i, j, c] += v * kernel[a, b, ci, c]


@njit(cache=True, fastmath=True)
def _conv2d_backward(xp, kernel, gout, stride, gxp, gk):
    ho, wo, cout = gout.shape
    kh, kw, cin, _ = kernel.shape
    for i in range(ho):
        for j in range(wo):
            for a in range(kh):
                for b in range(kw):
                    for ci in range(cin):
                        v = xp[i * stride + a, j * stride + b, ci]
                        acc = 0.0
                        for c in range(cout):
                            g = gout[i, j, c]
                            acc += g * kernel[a, b, ci, c]
                            gk[a, b, ci, c] += v * g
                        gxp[i * stride + a, j * stride + b, ci] += acc


@njit(cache=True)
def _softargmax3_forward(x, temperature, out):
    h, w = x.shape
    for i in range(h):
        for j in range(w):
            r0, r1 = max(i - 1, 0), min(i + 1, h - 1)
            c0, c1 = max(j - 1, 0), min(j + 1, w - 1)
            m = x[r0, c0]
            for a in range(r0, r1 + 1):
                for b in range(c0, c1 + 1):
                    if x[a, b] > m:
                        m = x[a, b]
            z = 0.0
            s = 0.0
            for a in range(r0, r1 + 1):
                for b in range(c0, c1 + 1):
                    e = np.exp((x[a, b] - m) / temperature)
                    z += e
                    s += e * x[a, b]
            out[i, j] = s / z


@njit(cache=True)
def _softargmax3_backward(x, out, gout, temperature, gx):
    h, w = x.shape
    for i in range(h):
        for j in range(w):
            g = gout[i, j]
            if g == 0.0:
                continue
            r0, r1 = max(i - 1, 0), min(i + 1, h - 1)
            c0, c1 = max(j - 1, 0), min(j + 1, w - 1)
            m = x[r0, c0]
            for a in range(r0, r1 + 1):
                for b in range(c0, c1 + 1):
                    if x[a, b] > m:
                        m = x[a, b]
            z = 0.0
            for a in range(r0, r1 + 1):
                for b in range(c0, c1 + 1):
                    z += np.exp((x[a, b] - m) / temperature)
            o = out[i, j]
            for a in range(r0, r1 + 1):
                for b in range(c0, c1 + 1):
                    wq = np.exp((x[a, b] - m) / temperature) / z
                    gx[a, b] += g * wq * (1.0 + (x[a, b] - o) / temperature)


def conv2d_forward(xp, kernel, bias, stride):
    kh, kw, _, cout = kernel.shape
    hp, wp, _ = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    out = np.empty((ho, wo, cout))
    _conv2d_forward(xp, kernel, bias, stride, out)
    return out


def conv2d_backward(xp, kernel, gout, stride):
    gxp = np.zeros_like(xp)
    gk = np.zeros_like(kernel)
    _conv2d_backward(xp, kernel, np.ascontiguousarray(gout), stride, gxp, gk)
    return gxp, gk


def softargmax3_forward(x, temperature):
    out = np.empty_like(x)
    _softargmax3_forward(x, temperature, out)
    return out


def softargmax3_backward(x, out, gout, temperature):
    gx = np.zeros_like(x)
    _softargmax3_backward(x, out, np.ascontiguousarray(gout), temperature, gx)
    return gx
