"""Pure-numpy kernel implementations (fallback path).

All kernels take and return float64 arrays. Convolution inputs arrive
already zero-padded; gradients w.r.t. the padded input are returned in
padded coordinates and unpadded by the caller.
"""

import numpy as np

_NEG_INF = -np.inf


def conv2d_forward(xp, kernel, bias, stride):
    """Cross-correlate padded input (Hp,Wp,Cin) with kernel (kh,kw,Cin,Cout)."""
    kh, kw, cin, cout = kernel.shape
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(0, 1))
    win = win[::stride, ::stride]  # (Ho, Wo, Cin, kh, kw)
    out = np.tensordot(win, kernel, axes=([2, 3, 4], [2, 0, 1]))
    out += bias
    return np.ascontiguousarray(out)


def conv2d_backward(xp, kernel, gout, stride):
    """Gradients w.r.t. padded input and kernel for conv2d_forward."""
    kh, kw, cin, cout = kernel.shape
    ho, wo, _ = gout.shape
    gxp = np.zeros_like(xp)
    gk = np.zeros_like(kernel)
    for a in range(kh):
        for b in range(kw):
            rows = slice(a, a + stride * ho, stride)
            cols = slice(b, b + stride * wo, stride)
            gxp[rows, cols] += gout @ kernel[a, b].T
            gk[a, b] = np.tensordot(xp[rows, cols], gout, axes=([0, 1], [0, 1]))
    return gxp, gk


def maxpool2_forward(x):
    """2x2 stride-2 max pool; also returns the in-window argmax (0..3, row-major)."""
    h, w, c = x.shape
    blocks = x.reshape(h // 2, 2, w // 2, 2, c).transpose(0, 2, 1, 3, 4)
    flat = blocks.reshape(h // 2, w // 2, 4, c)
    arg = flat.argmax(axis=2)  # first max wins ties, row-major window order
    out = np.take_along_axis(flat, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return np.ascontiguousarray(out), arg


def maxpool2_backward(arg, gout):
    ho, wo, c = gout.shape
    gx = np.zeros((2 * ho, 2 * wo, c))
    ii, jj, cc = np.meshgrid(
        np.arange(ho), np.arange(wo), np.arange(c), indexing="ij"
    )
    gx[2 * ii + arg // 2, 2 * jj + arg % 2, cc] = gout
    return gx


def upsample2_forward(x):
    return np.ascontiguousarray(np.repeat(np.repeat(x, 2, axis=0), 2, axis=1))


def upsample2_backward(gout):
    h2, w2, c = gout.shape
    return gout.reshape(h2 // 2, 2, w2 // 2, 2, c).sum(axis=(1, 3))


def _window_weights(x, temperature):
    """Per-pixel 3x3 softmax weights; out-of-image positions get weight 0."""
    h, w = x.shape
    xp = np.full((h + 2, w + 2), _NEG_INF)
    xp[1:-1, 1:-1] = x
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3))  # (h, w, 3, 3)
    m = win.max(axis=(2, 3), keepdims=True)
    e = np.exp((win - m) / temperature)
    weights = e / e.sum(axis=(2, 3), keepdims=True)
    vals = np.where(np.isfinite(win), win, 0.0)
    return weights, vals


def softargmax3_forward(x, temperature):
    """Softmax-weighted 3x3 window sum of a single-channel map."""
    weights, vals = _window_weights(x, temperature)
    return (weights * vals).sum(axis=(2, 3))


def softargmax3_backward(x, out, gout, temperature):
    h, w = x.shape
    weights, vals = _window_weights(x, temperature)
    # d out(p) / d x(q) = w_q * (1 + (x_q - out(p)) / T) for q in the window
    term = weights * (1.0 + (vals - out[:, :, None, None]) / temperature)
    term = np.where(weights > 0.0, term, 0.0)
    contrib = gout[:, :, None, None] * term
    gxp = np.zeros((h + 2, w + 2))
    for a in range(3):
        for b in range(3):
            gxp[a : a + h, b : b + w] += contrib[:, :, a, b]
    return gxp[1:-1, 1:-1]
