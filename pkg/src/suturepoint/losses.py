"""Similarity and class-balance losses, built as tape graphs.

Stage 1 is trained with mse + (1 - soft Dice); stage 2 uses the same
composite (variant 1) or one minus a recall-weighted F-beta overlap score
against a binary mask (variant 2). The two stage losses are summed with
unit weights. ``*_value`` helpers evaluate the same graphs on plain arrays.
"""

from dataclasses import dataclass

import numpy as np

from .tape import Tape, mean_all


@dataclass(frozen=True)
class LossConfig:
    beta: float = 2.0
    epsilon: float = 1e-6
    variant: int = 1

    def __post_init__(self):
        if self.beta <= 0 or self.epsilon <= 0:
            raise ValueError("beta and epsilon must be positive")
        if self.variant not in (1, 2):
            raise ValueError(f"variant must be 1 or 2, got {self.variant}")


def _check_same_shape(tape, p, g, what):
    ps, gs = tape.value(p).shape, tape.value(g).shape
    if ps != gs:
        raise ValueError(f"{what}: prediction {ps} vs target {gs}")


def _check_binary(tape, g):
    gv = tape.value(g)
    if not np.all((gv == 0.0) | (gv == 1.0)):
        raise ValueError("target mask must be binary {0, 1}")


def mse(tape, p, g):
    """Mean over all pixels of (p - g)^2."""
    _check_same_shape(tape, p, g, "mse shape mismatch")
    d = tape.sub(p, g)
    return mean_all(tape, tape.mul(d, d))


def sdc(tape, p, g, epsilon=1e-6):
    """Soft Sorensen-Dice overlap: (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps)."""
    _check_same_shape(tape, p, g, "sdc shape mismatch")
    num = tape.affine(tape.sum_all(tape.mul(p, g)), 2.0, epsilon)
    den = tape.affine(tape.add(tape.sum_all(p), tape.sum_all(g)), 1.0, epsilon)
    return tape.div(num, den)


def loss_l1(tape, p, g, epsilon=1e-6):
    """Composite similarity loss: mse + 1 - sdc."""
    return tape.add(mse(tape, p, g), tape.affine(sdc(tape, p, g, epsilon), -1.0, 1.0))


def f_beta_score(tape, p, g, beta=2.0, epsilon=1e-6):
    """Recall-weighted overlap score between a soft map and a binary mask.

    ((1+b^2)*TP + eps) / ((1+b^2)*TP + b^2*FN + FP + eps) with soft counts
    TP = sum(p*g), FN = sum((1-p)*g), FP = sum(p*(1-g)).
    """
    _check_same_shape(tape, p, g, "f_beta shape mismatch")
    _check_binary(tape, g)
    b2 = beta * beta
    tp = tape.sum_all(tape.mul(p, g))
    fn = tape.sub(tape.sum_all(g), tp)
    fp = tape.sub(tape.sum_all(p), tp)
    num = tape.affine(tp, 1.0 + b2, epsilon)
    den = tape.add(tape.add(num, tape.affine(fn, b2)), fp)
    return tape.div(num, den)


def loss_l2(tape, p, g, cfg):
    """Stage-2 loss: variant 1 repeats loss_l1; variant 2 uses 1 - F_beta."""
    if cfg.variant == 1:
        return loss_l1(tape, p, g, cfg.epsilon)
    return tape.affine(f_beta_score(tape, p, g, cfg.beta, cfg.epsilon), -1.0, 1.0)


def loss_total(tape, stage1, stage2, g_heat, g_bin, cfg):
    """Joint objective: loss_l1(stage1) + loss_l2(stage2), unit weights."""
    target2 = g_heat if cfg.variant == 1 else g_bin
    return tape.add(
        loss_l1(tape, stage1, g_heat, cfg.epsilon),
        loss_l2(tape, stage2, target2, cfg),
    )


# -- plain-array evaluation ---------------------------------------------------


def _eval(build):
    tape = Tape()
    return float(tape.value(build(tape)).ravel()[0])


def mse_value(p, g):
    return _eval(lambda t: mse(t, t.const(p), t.const(g)))


def sdc_value(p, g, epsilon=1e-6):
    return _eval(lambda t: sdc(t, t.const(p), t.const(g), epsilon))


def loss_l1_value(p, g, epsilon=1e-6):
    return _eval(lambda t: loss_l1(t, t.const(p), t.const(g), epsilon))


def f_beta_value(p, g, beta=2.0, epsilon=1e-6):
    return _eval(lambda t: f_beta_score(t, t.const(p), t.const(g), beta, epsilon))


def loss_l2_value(p, g, cfg):
    return _eval(lambda t: loss_l2(t, t.const(p), t.const(g), cfg))


def loss_total_value(s1, s2, g_heat, g_bin, cfg):
    return _eval(
        lambda t: loss_total(t, t.const(s1), t.const(s2), t.const(g_heat),
                             t.const(g_bin), cfg)
    )
