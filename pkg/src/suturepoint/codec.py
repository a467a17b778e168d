"""Point set <-> likelihood heatmap conversion.

Encoding places a distribution (gaussian, tanh, or single-pixel binary)
around every point and combines overlaps by per-pixel maximum, which keeps
values in [0, 1] and the peak at 1 regardless of point spacing. Decoding
thresholds, labels connected clusters, and returns each cluster's
intensity-weighted centroid.
"""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_KINDS = ("gaussian", "tanh", "binary")

_CONNECTIVITY = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]]),
    8: np.ones((3, 3), dtype=int),
}


@dataclass(frozen=True)
class PointSet:
    """Ordered sub-pixel (x, y) coordinates for one image; may be empty."""

    points: tuple
    image_height: int
    image_width: int

    def __post_init__(self):
        if self.image_height < 1 or self.image_width < 1:
            raise ValueError("image dimensions must be positive")
        pts = tuple((float(x), float(y)) for x, y in self.points)
        for i, (x, y) in enumerate(pts):
            if not (0.0 <= x < self.image_width and 0.0 <= y < self.image_height):
                raise ValueError(
                    f"point {i} at ({x}, {y}) outside "
                    f"{self.image_width}x{self.image_height} image"
                )
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def as_array(self):
        if not self.points:
            return np.zeros((0, 2))
        return np.asarray(self.points, dtype=np.float64)


@dataclass(frozen=True)
class DistributionSpec:
    """Heatmap profile: gaussian (sigma1), tanh (alpha), or binary."""

    kind: str
    sigma1: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.kind == "gaussian" and (self.sigma1 is None or self.sigma1 <= 0):
            raise ValueError("gaussian distribution requires positive sigma1")
        if self.kind == "tanh" and (self.alpha is None or self.alpha <= 0):
            raise ValueError("tanh distribution requires positive alpha")

    def profile(self, radii):
        r = np.asarray(radii, dtype=np.float64)
        if np.any(r < 0):
            raise ValueError("radii must be non-negative")
        if self.kind == "gaussian":
            return np.exp(-(r**2) / (2.0 * self.sigma1**2))
        if self.kind == "tanh":
            return 1.0 - np.tanh(r / self.alpha)
        return (r == 0).astype(np.float64)


def distribution_profile(spec, radii):
    """Evaluate the distribution value at each radius (for profile plots)."""
    return spec.profile(radii)


def encode(points, spec):
    """Render a PointSet into an (H, W) heatmap in [0, 1]."""
    h, w = points.image_height, points.image_width
    heat = np.zeros((h, w))
    if len(points) == 0:
        return heat
    if spec.kind == "binary":
        for x, y in points.points:
            heat[int(np.floor(y + 0.5)), int(np.floor(x + 0.5))] = 1.0
        return heat
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for x, y in points.points:
        r = np.sqrt((xx - x) ** 2 + (yy - y) ** 2)
        np.maximum(heat, spec.profile(r), out=heat)
    return heat


def decode(heatmap, threshold=0.5, connectivity=8):
    """Extract cluster centroids from a heatmap.

    Binarizes at >= threshold, labels connected components, and returns the
    heatmap-weighted centroid of each, ordered by ascending (y, x).
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim == 3 and heatmap.shape[2] == 1:
        heatmap = heatmap[:, :, 0]
    if heatmap.ndim != 2:
        raise ValueError(f"heatmap must be 2-D, got shape {heatmap.shape}")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if connectivity not in _CONNECTIVITY:
        raise ValueError("connectivity must be 4 or 8")
    h, w = heatmap.shape
    mask = heatmap >= threshold
    labels, count = ndimage.label(mask, structure=_CONNECTIVITY[connectivity])
    if count == 0:
        return PointSet((), h, w)
    centroids = ndimage.center_of_mass(heatmap, labels, index=range(1, count + 1))
    pts = sorted((cy, cx) for cy, cx in centroids)
    return PointSet(tuple((cx, cy) for cy, cx in pts), h, w)
