"""Prediction overlays: 5-px circles on the image, colour-coded by match
outcome (green = matched prediction, red = unmatched prediction, orange =
missed ground truth)."""

import numpy as np

TP_RGB = (0, 200, 0)
FP_RGB = (220, 0, 0)
FN_RGB = (255, 140, 0)

CIRCLE_RADIUS = 5.0


def draw_circle(image, cx, cy, rgb, radius=CIRCLE_RADIUS):
    h, w = image.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w]
    dist = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
    ring = np.abs(dist - radius) <= 0.5
    image[ring] = np.asarray(rgb, dtype=np.float64) / 255.0


def render_overlay(image, matches, false_positives, false_negatives):
    """Return a copy of ``image`` with the outcome circles drawn.

    ``matches`` holds dicts with a "pred" coordinate pair; the other two are
    plain coordinate lists. Draw order is FN, FP, TP so true positives stay
    visible where circles overlap.
    """
    out = np.asarray(image, dtype=np.float64).copy()
    for x, y in false_negatives:
        draw_circle(out, x, y, FN_RGB)
    for x, y in false_positives:
        draw_circle(out, x, y, FP_RGB)
    for m in matches:
        x, y = m["pred"] if isinstance(m, dict) else m
        draw_circle(out, x, y, TP_RGB)
    return out
