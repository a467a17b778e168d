"""Synthetic desk-scale dataset: bright dot/cross markers on a smooth noisy
background, with exact point labels and round-robin group assignment."""

import numpy as np

from .codec import PointSet
from .data import Sample


class PackingError(RuntimeError):
    pass


def _bilinear_upsample(cells, h, w):
    gh, gw = cells.shape[:2]
    ys = np.linspace(0.0, gh - 1.0, h)
    xs = np.linspace(0.0, gw - 1.0, w)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, gh - 1)
    x1 = np.minimum(x0 + 1, gw - 1)
    fy = (ys - y0)[:, None, None]
    fx = (xs - x0)[None, :, None]
    top = cells[y0][:, x0] * (1 - fx) + cells[y0][:, x1] * fx
    bot = cells[y1][:, x0] * (1 - fx) + cells[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def _place_points(rng, h, w, count, min_separation, margin, attempts=1000):
    pts = []
    for _ in range(count):
        for attempt in range(attempts):
            x = float(rng.integers(margin, w - margin))
            y = float(rng.integers(margin, h - margin))
            if all((x - px) ** 2 + (y - py) ** 2 >= min_separation**2
                   for px, py in pts):
                pts.append((x, y))
                break
        else:
            raise PackingError(
                f"could not place {count} points with separation "
                f"{min_separation} in {w}x{h} after {attempts} attempts"
            )
    return pts


def _draw_cross(img, x, y, color):
    xi, yi = int(x), int(y)
    img[yi, xi] = color
    for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
        img[yi + dy, xi + dx] = color
    for dy in (-1, 1):
        for dx in (-1, 1):
            img[yi + dy, xi + dx] = 0.5 * (img[yi + dy, xi + dx] + color)


def synth_dataset(n_images, dims=(64, 96), dots_per_image=(3, 12),
                  min_separation=10.0, n_groups=4, seed=0):
    """Generate labelled samples; deterministic for a fixed seed."""
    h, w = dims
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(n_images):
        cells = rng.uniform(0.10, 0.50, size=(h // 16 + 2, w // 16 + 2, 3))
        img = _bilinear_upsample(cells, h, w)
        img += rng.normal(0.0, 0.015, size=img.shape)
        count = int(rng.integers(dots_per_image[0], dots_per_image[1] + 1))
        pts = _place_points(rng, h, w, count, min_separation, margin=3)
        for x, y in pts:
            base = rng.uniform(0.82, 0.98)
            color = np.clip(base + rng.uniform(-0.08, 0.08, size=3), 0.0, 1.0)
            _draw_cross(img, x, y, color)
        group = f"group_{i % n_groups}"
        samples.append(
            Sample(
                image=np.clip(img, 0.0, 1.0),
                points=PointSet(tuple(pts), h, w),
                group_id=group,
                sample_id=f"{group}/img_{i:05d}",
            )
        )
    return samples


def write_dataset(samples, root):
    """Write samples in the ingestion layout: group dirs, PPM + JSON."""
    from pathlib import Path

    from . import formats

    root = Path(root)
    for s in samples:
        d = root / s.group_id
        d.mkdir(parents=True, exist_ok=True)
        stem = s.sample_id.split("/")[-1]
        formats.write_ppm8(d / f"{stem}.ppm", s.image)
        formats.write_labelme(d / f"{stem}.json", s.points, image_path=f"{stem}.ppm")
    return root
