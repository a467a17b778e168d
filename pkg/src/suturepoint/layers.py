"""Differentiable output-stage layers: local Gaussian filter and windowed
soft-argmax (a soft local non-maximum suppression)."""

import math
from dataclasses import dataclass

import numpy as np


def gaussian_kernel2d(sigma, size=None):
    """Sum-normalized isotropic 2-D Gaussian, truncated at 3*sigma by default."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if size is None:
        size = 2 * math.ceil(3.0 * sigma) + 1
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    half = size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    k = np.exp(-(xx**2 + yy**2) / (2.0 * sigma**2))
    return k / k.sum()


@dataclass(frozen=True)
class GaussianLayerSpec:
    sigma2: float
    kernel_size: int | None = None

    def kernel(self):
        return gaussian_kernel2d(self.sigma2, self.kernel_size)


@dataclass(frozen=True)
class SoftArgmaxSpec:
    """3x3 window, stride 1, padding 1; temperature sets softmax sharpness."""

    window: int = 3
    stride: int = 1
    padding: int = 1
    temperature: float = 0.1

    def __post_init__(self):
        if (self.window, self.stride, self.padding) != (3, 1, 1):
            raise ValueError("only window=3, stride=1, padding=1 is supported")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


def gaussian_filter(tape, x, spec):
    """Shape-preserving depthwise Gaussian blur of a single-channel node.

    The kernel is a fixed constant (not learnable); gradients flow through
    the convolution into the input only.
    """
    if tape.value(x).shape[2] != 1:
        raise ValueError(
            f"gaussian_filter needs a single channel, got {tape.value(x).shape}"
        )
    k = spec.kernel()
    size = k.shape[0]
    kernel = tape.const(k[:, :, None, None].reshape(size, size, 1, 1))
    bias = tape.const(np.zeros((1, 1, 1)))
    return tape.conv2d(x, kernel, bias, stride=1, padding=size // 2)


def conv_soft_argmax(tape, x, spec):
    """Softmax-weighted 3x3 window sum; out-of-image positions are excluded."""
    return tape.softargmax3(x, spec.temperature)


def _neighborhood8(arr, y, x):
    h, w = arr.shape
    if not (1 <= y < h - 1 and 1 <= x < w - 1):
        raise ValueError(f"peak ({x}, {y}) must be interior to the {w}x{h} map")
    win = arr[y - 1 : y + 2, x - 1 : x + 2]
    return (win.sum() - arr[y, x]) / 8.0


def nms_sharpness(before, after, peak):
    """Change in peak-vs-neighborhood contrast between two maps.

    Contrast is map[peak] minus the mean over the 8-neighborhood; returns
    after-contrast minus before-contrast. The peak must be a strict local
    maximum of ``before``.
    """
    before = np.asarray(before, dtype=np.float64)
    after = np.asarray(after, dtype=np.float64)
    if before.shape != after.shape:
        raise ValueError(f"shape mismatch: {before.shape} vs {after.shape}")
    x, y = int(peak[0]), int(peak[1])
    h, w = before.shape
    if not (1 <= y < h - 1 and 1 <= x < w - 1):
        raise ValueError(f"peak ({x}, {y}) must be interior to the {w}x{h} map")
    win = before[y - 1 : y + 2, x - 1 : x + 2].copy()
    center = win[1, 1]
    win[1, 1] = -np.inf
    if not center > win.max():
        raise ValueError(f"({x}, {y}) is not a strict local maximum of `before`")
    c_before = center - _neighborhood8(before, y, x)
    c_after = after[y, x] - _neighborhood8(after, y, x)
    return c_after - c_before
