"""Dataset ingestion, group-level splitting, and target-mask generation.

Directory layout: one subdirectory per group (surgery/session), each holding
PPM images with sibling point-annotation JSON files. Flat directories load
as a single group.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .codec import DistributionSpec, PointSet, encode

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Sample:
    image: np.ndarray  # (H, W, 3) float64 in [0, 1]
    points: PointSet
    group_id: str
    sample_id: str

    def __post_init__(self):
        h, w = self.image.shape[:2]
        if (self.points.image_height, self.points.image_width) != (h, w):
            raise ValueError(
                f"sample {self.sample_id!r}: points sized "
                f"{self.points.image_width}x{self.points.image_height} "
                f"vs image {w}x{h}"
            )


def load_labelme(points_json, image_file, group_id=None, sample_id=None):
    """Build a Sample from a point-annotation JSON file and its image."""
    points_json = Path(points_json)
    image_file = Path(image_file)
    pts, h, w, ignored = formats.read_labelme(points_json)
    if ignored:
        log.warning("%s: ignored %d non-point shape(s)", points_json, ignored)
    image = formats.read_netpbm(image_file)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    if image.shape[:2] != (h, w):
        raise ValueError(
            f"{points_json}: annotation says {w}x{h} but image is "
            f"{image.shape[1]}x{image.shape[0]}"
        )
    try:
        points = PointSet(tuple(pts), h, w)
    except ValueError as exc:
        raise ValueError(f"{points_json}: {exc}") from exc
    return Sample(
        image=image,
        points=points,
        group_id=group_id if group_id is not None else image_file.parent.name,
        sample_id=sample_id if sample_id is not None else image_file.stem,
    )


def load_dataset(root):
    """All samples under ``root``; subdirectories become group ids."""
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"dataset directory {root} does not exist")
    subdirs = sorted(d for d in root.iterdir() if d.is_dir())
    sources = [(d, d.name) for d in subdirs] or [(root, "default")]
    samples = []
    for directory, group in sources:
        for img in sorted(directory.glob("*.ppm")):
            ann = img.with_suffix(".json")
            if not ann.exists():
                raise ValueError(f"{img} has no sibling annotation JSON")
            sid = img.stem if directory == root else f"{group}/{img.stem}"
            samples.append(load_labelme(ann, img, group_id=group, sample_id=sid))
    if not samples:
        raise ValueError(f"no .ppm images found under {root}")
    return samples


def group_kfold(samples, k):
    """k folds with no group straddling train/val.

    Groups are dealt largest-first onto the currently smallest fold, so fold
    sizes stay balanced by sample count. Returns [(train_ids, val_ids)] with
    sample ids; deterministic for a fixed sample order.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    order = {}
    counts = {}
    for s in samples:
        counts[s.group_id] = counts.get(s.group_id, 0) + 1
        order.setdefault(s.group_id, len(order))
    if len(counts) < k:
        raise ValueError(f"need at least k={k} groups, found {len(counts)}")
    groups = sorted(counts, key=lambda g: (-counts[g], order[g]))
    fold_groups = [[] for _ in range(k)]
    fold_sizes = [0] * k
    for g in groups:
        target = min(range(k), key=lambda i: (fold_sizes[i], i))
        fold_groups[target].append(g)
        fold_sizes[target] += counts[g]
    folds = []
    for i in range(k):
        val_set = set(fold_groups[i])
        train = [s.sample_id for s in samples if s.group_id not in val_set]
        val = [s.sample_id for s in samples if s.group_id in val_set]
        folds.append((train, val))
    return folds


def target_masks(points, spec_heat):
    """(heatmap, binary) training targets; regenerate after any geometric
    augmentation from the transformed points."""
    return encode(points, spec_heat), encode(points, DistributionSpec("binary"))
