"""Multi-instance point detection via heatmap regression.

Core pieces: point<->heatmap codecs, a minimal reverse-mode tape over dense
grids, the differentiable Gaussian-filter and windowed soft-argmax output
layers, overlap losses, a small U-Net style detector with an Adam trainer,
and the radius-constrained matching/metrics protocol.
"""

__version__ = "0.1.0"

from .codec import DistributionSpec, PointSet, decode, distribution_profile, encode
from .evalkit import MatchReport, MetricsReport, aggregate, image_metrics, match_points
from .model import ModelConfig, build_model, forward, predict
from .tape import Tape
from .train import TrainConfig, train

__all__ = [
    "DistributionSpec",
    "MatchReport",
    "MetricsReport",
    "ModelConfig",
    "PointSet",
    "Tape",
    "TrainConfig",
    "aggregate",
    "build_model",
    "decode",
    "distribution_profile",
    "encode",
    "forward",
    "image_metrics",
    "match_points",
    "predict",
    "train",
]
