"""Radius-constrained matching and detection metrics.

Matching is greedy over globally distance-sorted candidate pairs: every
(prediction, ground truth) pair closer than the radius (strict inequality)
is a candidate; pairs are accepted closest-first while both endpoints are
still free. Ties break on (gt index, pred index), so the result does not
depend on input order.
"""

import math
from dataclasses import dataclass

import numpy as np


def _coords(points):
    if hasattr(points, "as_array"):
        return points.as_array()
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got {arr.shape}")
    return arr


@dataclass
class MatchReport:
    radius: float
    matches: list  # (pred index, gt index, distance)
    unmatched_pred: list
    unmatched_gt: list

    @property
    def tp(self):
        return len(self.matches)

    @property
    def fp(self):
        return len(self.unmatched_pred)

    @property
    def fn(self):
        return len(self.unmatched_gt)

    @property
    def n_pred(self):
        return self.tp + self.fp

    @property
    def n_gt(self):
        return self.tp + self.fn


@dataclass
class MetricsReport:
    ppv: float
    tpr: float
    f1: float
    rmse: float | None
    mean_min_dist: float | None
    images_with_predictions: int
    images_total: int


def match_points(pred, gt, radius):
    """Greedy closest-first matching within ``radius`` (strict)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    p = _coords(pred)
    g = _coords(gt)
    candidates = []
    for gi in range(len(g)):
        for pi in range(len(p)):
            d = math.dist(p[pi], g[gi])
            if d < radius:
                candidates.append((d, gi, pi))
    candidates.sort()
    used_p = set()
    used_g = set()
    matches = []
    for d, gi, pi in candidates:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        matches.append((pi, gi, d))
    return MatchReport(
        radius=float(radius),
        matches=matches,
        unmatched_pred=[i for i in range(len(p)) if i not in used_p],
        unmatched_gt=[i for i in range(len(g)) if i not in used_g],
    )


def _rates(tp, fp, fn):
    # 0/0 conventions: an empty denominator counts as perfect only when the
    # other error type is absent too (no predictions + no gt -> all 1).
    ppv = tp / (tp + fp) if tp + fp else (1.0 if fn == 0 else 0.0)
    tpr = tp / (tp + fn) if tp + fn else (1.0 if fp == 0 else 0.0)
    f1 = 0.0 if ppv + tpr == 0 else 2.0 * ppv * tpr / (ppv + tpr)
    return ppv, tpr, f1


def image_metrics(report):
    """(ppv, tpr, f1) for one image."""
    return _rates(report.tp, report.fp, report.fn)


def _min_distances(pred, gt):
    p = _coords(pred)
    g = _coords(gt)
    if len(p) == 0 or len(g) == 0:
        return None
    d = np.sqrt(((p[:, None, :] - g[None, :, :]) ** 2).sum(axis=2))
    return d.min(axis=1)


def rmse_localization(pred, gt):
    """Root-mean-square of each prediction's distance to its nearest gt.

    Every predicted point contributes, matched or not. None when the image
    has no predictions (excluded from the aggregate and only counted) or no
    ground truth to measure against.
    """
    dmin = _min_distances(pred, gt)
    return None if dmin is None else float(np.sqrt((dmin**2).mean()))


def mean_min_distance(pred, gt):
    """Arithmetic mean of the same per-prediction min distances."""
    dmin = _min_distances(pred, gt)
    return None if dmin is None else float(dmin.mean())


def aggregate(per_image, mode="micro", rmses=None, mean_min_dists=None):
    """Pool per-image match reports into one MetricsReport.

    micro pools TP/FP/FN counts then computes rates once; macro averages the
    per-image rates (macro f1 is the harmonic mean of the averaged rates, so
    the f1 identity holds for every report).
    """
    if not per_image:
        raise ValueError("need at least one image report")
    if mode == "micro":
        tp = sum(r.tp for r in per_image)
        fp = sum(r.fp for r in per_image)
        fn = sum(r.fn for r in per_image)
        ppv, tpr, f1 = _rates(tp, fp, fn)
    elif mode == "macro":
        rates = [image_metrics(r) for r in per_image]
        ppv = float(np.mean([r[0] for r in rates]))
        tpr = float(np.mean([r[1] for r in rates]))
        f1 = 0.0 if ppv + tpr == 0 else 2.0 * ppv * tpr / (ppv + tpr)
    else:
        raise ValueError(f"mode must be micro or macro, got {mode!r}")

    def _mean(values):
        if values is None:
            return None, 0
        present = [v for v in values if v is not None]
        return (float(np.mean(present)) if present else None), len(present)

    rmse, n_with = _mean(rmses)
    mean_min, _ = _mean(mean_min_dists)
    if rmses is None:
        n_with = sum(1 for r in per_image if r.n_pred > 0)
    return MetricsReport(
        ppv=ppv, tpr=tpr, f1=f1, rmse=rmse, mean_min_dist=mean_min,
        images_with_predictions=n_with, images_total=len(per_image),
    )


def evaluate_pairs(pairs, radii=(6.0, 8.0, 10.0), modes=("micro", "macro")):
    """Full protocol over (pred, gt) pairs: metrics per radius and mode.

    Returns (rows, reports_by_radius) where rows are
    (radius, mode, MetricsReport) and reports keep per-image detail for
    match dumps.
    """
    radii = list(radii)
    if any(r <= 0 for r in radii) or sorted(radii) != radii:
        raise ValueError("radii must be positive and ascending")
    rmses = [rmse_localization(p, g) for p, g in pairs]
    mean_mins = [mean_min_distance(p, g) for p, g in pairs]
    rows = []
    reports_by_radius = {}
    for radius in radii:
        reports = [match_points(p, g, radius) for p, g in pairs]
        reports_by_radius[radius] = reports
        for mode in modes:
            rows.append((radius, mode,
                         aggregate(reports, mode, rmses, mean_mins)))
    return rows, reports_by_radius


def radius_sweep(pairs, radii=(6.0, 8.0, 10.0), mode="micro"):
    """MetricsReport per radius; TP counts are non-decreasing in radius."""
    rows, _ = evaluate_pairs(pairs, radii, modes=(mode,))
    return {radius: report for radius, _, report in rows}


def close_point_analysis(pairs, radius=6.0, closeness=15.0):
    """TP rate for gt points with a near neighbour vs. isolated ones.

    A gt point is "close" when another gt point of the same image lies
    within ``closeness`` pixels. Returns (tp_rate_close, tp_rate_far); a
    rate is None when its subset is empty.
    """
    matched = {"close": 0, "far": 0}
    total = {"close": 0, "far": 0}
    for pred, gt in pairs:
        g = _coords(gt)
        if len(g) == 0:
            continue
        report = match_points(pred, gt, radius)
        hit = {gi for _, gi, _ in report.matches}
        for gi in range(len(g)):
            others = np.delete(np.arange(len(g)), gi)
            is_close = len(others) > 0 and any(
                math.dist(g[gi], g[oi]) <= closeness for oi in others
            )
            key = "close" if is_close else "far"
            total[key] += 1
            matched[key] += gi in hit
    rate = lambda k: matched[k] / total[k] if total[k] else None  # noqa: E731
    return rate("close"), rate("far")
