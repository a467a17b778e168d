"""Label-consistent augmentation.

Geometric transforms are composed into one affine map applied both to the
image (inverse-mapped bilinear resampling, zero fill) and to the point
coordinates; points pushed outside the frame are dropped. Photometric
transforms touch the image only. Each enabled transform fires independently
with the configured probability, in a fixed draw order, so a seeded
generator reproduces the exact augmentation stream.
"""

import math
from dataclasses import dataclass

import numpy as np

from .codec import PointSet


@dataclass(frozen=True)
class AugmentConfig:
    probability: float = 0.5
    hflip: bool = True
    vflip: bool = True
    rotation_deg: float = 60.0
    translate_frac: float = 0.10
    shear: float = 0.1
    brightness: float = 0.2
    contrast_range: tuple = (0.3, 0.5)
    saturation_range: tuple = (0.5, 2.0)
    hue: float = 0.1
    pixel_shift: float = 0.01

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise ValueError("probability must lie in [0, 1]")


def _mat_identity():
    return np.eye(3)


def _mat_translate(tx, ty):
    m = np.eye(3)
    m[0, 2] = tx
    m[1, 2] = ty
    return m


def _mat_linear(a, b, c, d):
    m = np.eye(3)
    m[0, 0], m[0, 1], m[1, 0], m[1, 1] = a, b, c, d
    return m


def _about_center(linear, w, h):
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    return _mat_translate(cx, cy) @ linear @ _mat_translate(-cx, -cy)


def affine_matrix(w, h, hflip=False, vflip=False, rotation_deg=0.0,
                  shear_x=0.0, translate=(0.0, 0.0)):
    """Forward point map (x, y, 1) -> (x', y', 1).

    Flips, rotation and shear act about the image center; composition order
    is flips, then rotation, then shear, then translation.
    """
    m = _mat_identity()
    if hflip:
        m = _about_center(_mat_linear(-1, 0, 0, 1), w, h) @ m
    if vflip:
        m = _about_center(_mat_linear(1, 0, 0, -1), w, h) @ m
    if rotation_deg:
        t = math.radians(rotation_deg)
        rot = _mat_linear(math.cos(t), -math.sin(t), math.sin(t), math.cos(t))
        m = _about_center(rot, w, h) @ m
    if shear_x:
        m = _about_center(_mat_linear(1, shear_x, 0, 1), w, h) @ m
    if translate != (0.0, 0.0):
        m = _mat_translate(*translate) @ m
    return m


def transform_points(points, matrix):
    """Map points through the affine; drops those landing outside the frame."""
    h, w = points.image_height, points.image_width
    kept = []
    for x, y in points.points:
        xn, yn, _ = matrix @ np.array([x, y, 1.0])
        if 0.0 <= xn < w and 0.0 <= yn < h:
            kept.append((xn, yn))
    return PointSet(tuple(kept), h, w)


def warp_image(image, matrix):
    """Inverse-map bilinear warp with zero fill outside the source frame."""
    h, w = image.shape[:2]
    inv = np.linalg.inv(matrix)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = inv[0, 0] * xx + inv[0, 1] * yy + inv[0, 2]
    sy = inv[1, 0] * xx + inv[1, 1] * yy + inv[1, 2]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    out = np.zeros_like(image)
    for dy in (0, 1):
        for dx in (0, 1):
            xs = x0 + dx
            ys = y0 + dy
            inside = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
            weight = ((fx if dx else 1 - fx) * (fy if dy else 1 - fy))[..., None]
            vals = image[ys.clip(0, h - 1), xs.clip(0, w - 1)]
            out += np.where(inside[..., None], weight * vals, 0.0)
    return out


def rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    span = maxc - minc
    s = np.where(maxc > 0, span / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe = np.where(span > 0, span, 1.0)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(span > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(np.int64) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    r = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [v, q, p, p, t, v])
    g = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [t, v, v, q, p, p])
    b = np.select([i == 0, i == 1, i == 2, i == 3, i == 4, i == 5], [p, p, t, v, v, q])
    return np.stack([r, g, b], axis=-1)


def augment(sample, cfg, rng):
    """Randomly transformed copy of a sample; labels stay consistent."""
    from .data import Sample

    h, w = sample.image.shape[:2]
    p = cfg.probability

    geo = {}
    if cfg.hflip and rng.random() < p:
        geo["hflip"] = True
    if cfg.vflip and rng.random() < p:
        geo["vflip"] = True
    if cfg.rotation_deg and rng.random() < p:
        geo["rotation_deg"] = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
    if cfg.translate_frac and rng.random() < p:
        geo["translate"] = (rng.uniform(-cfg.translate_frac, cfg.translate_frac) * w,
                            rng.uniform(-cfg.translate_frac, cfg.translate_frac) * h)
    if cfg.shear and rng.random() < p:
        geo["shear_x"] = rng.uniform(-cfg.shear, cfg.shear)

    image = sample.image
    points = sample.points
    if geo:
        matrix = affine_matrix(w, h, **geo)
        image = warp_image(image, matrix)
        points = transform_points(points, matrix)

    if cfg.brightness and rng.random() < p:
        image = image + rng.uniform(-cfg.brightness, cfg.brightness)
    if cfg.contrast_range and rng.random() < p:
        factor = rng.uniform(*cfg.contrast_range)
        mean = image.mean()
        image = mean + factor * (image - mean)
    if cfg.saturation_range and rng.random() < p:
        factor = rng.uniform(*cfg.saturation_range)
        hsv = rgb_to_hsv(np.clip(image, 0.0, 1.0))
        hsv[..., 1] = np.clip(hsv[..., 1] * factor, 0.0, 1.0)
        image = hsv_to_rgb(hsv)
    if cfg.hue and rng.random() < p:
        delta = rng.uniform(-cfg.hue, cfg.hue)
        hsv = rgb_to_hsv(np.clip(image, 0.0, 1.0))
        hsv[..., 0] = (hsv[..., 0] + delta) % 1.0
        image = hsv_to_rgb(hsv)
    if cfg.pixel_shift and rng.random() < p:
        image = image + rng.uniform(-cfg.pixel_shift, cfg.pixel_shift)

    image = np.clip(image, 0.0, 1.0)
    return Sample(image=image, points=points, group_id=sample.group_id,
                  sample_id=sample.sample_id)
