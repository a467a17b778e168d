"""Two-stage detector: configurable U-Net trunk -> sigmoid -> Gaussian filter
(stage 1) -> windowed soft-argmax (stage 2).

Depth counts encoder levels; 2x max-pools sit between them, the deepest level
acts as the bridge, and the decoder mirrors with nearest upsampling and skip
concatenation. Channel width doubles per level from ``base_channels``.
"""

from dataclasses import dataclass

import numpy as np

from .codec import DistributionSpec, decode
from .layers import GaussianLayerSpec, SoftArgmaxSpec, conv_soft_argmax, gaussian_filter
from .tape import Tape


@dataclass(frozen=True)
class ModelConfig:
    input_height: int
    input_width: int
    depth: int = 3
    base_channels: int = 8
    input_channels: int = 3
    sigma1: float = 2.0
    sigma2: float = 1.0
    softargmax_temperature: float = 0.1
    variant: int = 1
    distribution: str = "gaussian"
    alpha: float | None = None

    def __post_init__(self):
        if self.depth < 1 or self.base_channels < 1 or self.input_channels < 1:
            raise ValueError("depth, base_channels, input_channels must be >= 1")
        scale = 2**self.depth
        if self.input_height % scale or self.input_width % scale:
            raise ValueError(
                f"input {self.input_height}x{self.input_width} must be divisible "
                f"by 2^depth = {scale}"
            )
        if self.sigma1 <= 0 or self.sigma2 <= 0 or self.softargmax_temperature <= 0:
            raise ValueError("sigma1, sigma2 and temperature must be positive")
        if self.variant not in (1, 2):
            raise ValueError(f"variant must be 1 or 2, got {self.variant}")
        if self.distribution not in ("gaussian", "tanh"):
            raise ValueError(f"unsupported target distribution {self.distribution!r}")
        if self.distribution == "tanh" and (self.alpha is None or self.alpha <= 0):
            raise ValueError("tanh targets require positive alpha")

    def target_spec(self):
        """DistributionSpec used to build stage-1 training targets."""
        if self.distribution == "gaussian":
            return DistributionSpec("gaussian", sigma1=self.sigma1)
        if self.distribution == "tanh":
            return DistributionSpec("tanh", alpha=self.alpha)
        raise ValueError(f"unsupported target distribution {self.distribution!r}")

    def level_channels(self):
        return [self.base_channels * 2**i for i in range(self.depth)]


def param_shapes(cfg):
    """Ordered name -> shape map for all learnable tensors."""
    shapes = {}
    chans = cfg.level_channels()
    prev = cfg.input_channels
    for i, c in enumerate(chans):
        shapes[f"enc{i}_conv1_w"] = (3, 3, prev, c)
        shapes[f"enc{i}_conv1_b"] = (1, 1, c)
        shapes[f"enc{i}_conv2_w"] = (3, 3, c, c)
        shapes[f"enc{i}_conv2_b"] = (1, 1, c)
        prev = c
    for i in range(cfg.depth - 2, -1, -1):
        cat = chans[i + 1] + chans[i]
        shapes[f"dec{i}_conv1_w"] = (3, 3, cat, chans[i])
        shapes[f"dec{i}_conv1_b"] = (1, 1, chans[i])
        shapes[f"dec{i}_conv2_w"] = (3, 3, chans[i], chans[i])
        shapes[f"dec{i}_conv2_b"] = (1, 1, chans[i])
    shapes["out_w"] = (1, 1, chans[0], 1)
    shapes["out_b"] = (1, 1, 1)
    return shapes


def build_model(cfg, seed):
    """He-initialized weights: N(0, 2/fan_in) kernels, zero biases."""
    rng = np.random.default_rng(seed)
    weights = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith("_w"):
            fan_in = shape[0] * shape[1] * shape[2]
            weights[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        else:
            weights[name] = np.zeros(shape)
    return weights


def build_forward(tape, cfg, pnodes, image):
    """Record the full two-stage forward pass; returns (stage1, stage2) nodes.

    ``pnodes`` maps parameter names to already-created tape nodes (params for
    training, consts for inference); ``image`` is an (H, W, C) array.
    """
    image = np.asarray(image, dtype=np.float64)
    expect = (cfg.input_height, cfg.input_width, cfg.input_channels)
    if image.shape != expect:
        raise ValueError(f"image shape {image.shape} != configured {expect}")

    def block(x, tag):
        x = tape.relu(tape.conv2d(x, pnodes[f"{tag}_conv1_w"],
                                  pnodes[f"{tag}_conv1_b"], padding=1))
        return tape.relu(tape.conv2d(x, pnodes[f"{tag}_conv2_w"],
                                     pnodes[f"{tag}_conv2_b"], padding=1))

    x = tape.const(image)
    skips = []
    for i in range(cfg.depth):
        if i > 0:
            x = tape.maxpool2(x)
        x = block(x, f"enc{i}")
        skips.append(x)
    for i in range(cfg.depth - 2, -1, -1):
        x = tape.concat_channels(tape.upsample2(x), skips[i])
        x = block(x, f"dec{i}")
    logits = tape.conv2d(x, pnodes["out_w"], pnodes["out_b"])
    stage1 = gaussian_filter(tape, tape.sigmoid(logits),
                             GaussianLayerSpec(sigma2=cfg.sigma2))
    stage2 = conv_soft_argmax(tape, stage1,
                              SoftArgmaxSpec(temperature=cfg.softargmax_temperature))
    return stage1, stage2


def forward(weights, cfg, image):
    """Evaluate the model; returns (stage1, stage2) as (H, W) arrays."""
    tape = Tape()
    pnodes = {k: tape.const(v) for k, v in weights.items()}
    s1, s2 = build_forward(tape, cfg, pnodes, image)
    return tape.value(s1)[:, :, 0].copy(), tape.value(s2)[:, :, 0].copy()


def predict(weights, cfg, image, threshold=0.5):
    """Detected points: threshold + cluster centroids of the stage-2 map."""
    _, s2 = forward(weights, cfg, image)
    return decode(s2, threshold=threshold)
