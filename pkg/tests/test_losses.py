import math

import numpy as np
import pytest

from suturepoint.codec import DistributionSpec, PointSet, encode
from suturepoint.gradcheck import grad_check
from suturepoint.losses import (
    LossConfig,
    f_beta_score,
    f_beta_value,
    loss_l1,
    loss_l1_value,
    loss_l2_value,
    loss_total_value,
    mse_value,
    sdc_value,
)

RNG = np.random.default_rng(0)


def test_mse_basics():
    g = RNG.uniform(0, 1, size=(6, 8))
    assert mse_value(g, g) == 0.0
    assert math.isclose(mse_value(g + 0.1, g), 0.01, rel_tol=1e-12)


def test_mse_matches_scalar_loop():
    p = RNG.uniform(0, 1, size=(5, 7))
    g = RNG.uniform(0, 1, size=(5, 7))
    loop = sum((pv - gv) ** 2 for pv, gv in zip(p.ravel(), g.ravel())) / p.size
    assert abs(mse_value(p, g) - loop) < 1e-12


def test_mse_shape_mismatch():
    with pytest.raises(ValueError, match="mse"):
        mse_value(np.zeros((3, 3)), np.zeros((3, 4)))


def test_sdc_basics():
    g = (RNG.uniform(size=(6, 6)) < 0.4).astype(float)
    assert abs(sdc_value(g, g) - 1.0) < 1e-6
    p = np.zeros((4, 4))
    q = np.zeros((4, 4))
    p[0, 0] = 1.0
    q[3, 3] = 1.0
    eps = 1e-6
    assert math.isclose(sdc_value(p, q, eps), eps / (2.0 + eps), rel_tol=1e-9)


def test_sdc_soft_self_overlap():
    # with the linear-sum denominator, a soft map overlaps itself at
    # sum(g^2)/sum(g), not 1; only binary masks self-score 1
    g = RNG.uniform(0.2, 1, size=(6, 6))
    expect = (g**2).sum() / g.sum()
    assert math.isclose(sdc_value(g, g), expect, rel_tol=1e-6)


def test_sdc_half_overlap():
    p = np.zeros((4, 4))
    g = np.zeros((4, 4))
    p[0, 0] = p[0, 1] = 1.0
    g[0, 1] = g[0, 2] = 1.0
    assert abs(sdc_value(p, g) - 0.5) < 1e-6


def test_loss_l1_perfect_and_zero_prediction():
    g_bin = encode(PointSet(((4.0, 4.0), (2.0, 7.0)), 9, 9),
                   DistributionSpec("binary"))
    assert loss_l1_value(g_bin, g_bin) < 2e-6
    g = encode(PointSet(((4.0, 4.0),), 9, 9), DistributionSpec("gaussian", sigma1=1.0))
    zero = np.zeros_like(g)
    eps = 1e-6
    expect = (g**2).mean() + 1.0 - eps / (g.sum() + eps)
    assert math.isclose(loss_l1_value(zero, g), expect, rel_tol=1e-9)


def test_f_beta_fixtures():
    # 2 gt pixels; prediction hits one of them plus one background pixel
    g = np.zeros((4, 4))
    g[1, 1] = g[2, 2] = 1.0
    p = np.zeros((4, 4))
    p[1, 1] = 1.0
    p[0, 3] = 1.0
    assert abs(f_beta_value(p, g, beta=2.0) - 0.5) < 1e-5

    assert abs(f_beta_value(g, g, beta=2.0) - 1.0) < 1e-5
    assert f_beta_value(np.zeros_like(g), g, beta=2.0) < 1e-5


def test_f_beta_asymmetry():
    g = np.zeros((4, 4))
    g[1, 1] = g[2, 2] = 1.0
    fn_case = np.zeros((4, 4))   # TP=1, FN=1, FP=0
    fn_case[1, 1] = 1.0
    fp_case = np.zeros((4, 4))
    fp_case[1, 1] = 1.0
    fp_case[0, 0] = 1.0
    g_single = np.zeros((4, 4))
    g_single[1, 1] = 1.0
    # hand-derived: scores 5/9 vs 5/6, so losses 0.444 vs 0.167
    assert abs(f_beta_value(fn_case, g) - 5.0 / 9.0) < 1e-5
    assert abs(f_beta_value(fp_case, g_single) - 5.0 / 6.0) < 1e-5
    loss_fn = 1.0 - f_beta_value(fn_case, g)
    loss_fp = 1.0 - f_beta_value(fp_case, g_single)
    assert loss_fn > loss_fp


def test_f_beta_rejects_soft_target():
    p = np.zeros((3, 3))
    g = np.full((3, 3), 0.5)
    with pytest.raises(ValueError, match="binary"):
        f_beta_value(p, g)


def test_loss_l2_variants():
    g = encode(PointSet(((3.0, 3.0),), 8, 8), DistributionSpec("gaussian", sigma1=1.0))
    g_bin = encode(PointSet(((3.0, 3.0),), 8, 8), DistributionSpec("binary"))
    assert loss_l2_value(g_bin, g_bin, LossConfig(variant=1)) < 2e-6
    assert loss_l2_value(g_bin, g_bin, LossConfig(variant=2)) < 1e-5
    with pytest.raises(ValueError, match="binary"):
        loss_l2_value(g, g, LossConfig(variant=2))


def test_loss_total_is_sum_of_parts():
    s1 = RNG.uniform(0, 1, size=(6, 6))
    s2 = RNG.uniform(0, 1, size=(6, 6))
    g_heat = RNG.uniform(0, 1, size=(6, 6))
    g_bin = (RNG.uniform(size=(6, 6)) < 0.2).astype(float)
    for variant in (1, 2):
        cfg = LossConfig(variant=variant)
        total = loss_total_value(s1, s2, g_heat, g_bin, cfg)
        target2 = g_heat if variant == 1 else g_bin
        parts = loss_l1_value(s1, g_heat) + loss_l2_value(s2, target2, cfg)
        assert math.isclose(total, parts, rel_tol=1e-12)
    perfect = loss_total_value(g_bin, g_bin, g_bin, g_bin, LossConfig(variant=1))
    assert perfect < 4e-6


def test_losses_nonnegative_and_permutation_symmetric():
    p = RNG.uniform(0, 1, size=(5, 6))
    g = (RNG.uniform(size=(5, 6)) < 0.3).astype(float)
    perm = RNG.permutation(p.size)
    p2 = p.ravel()[perm].reshape(p.shape)
    g2 = g.ravel()[perm].reshape(g.shape)
    assert loss_l1_value(p, g) >= 0.0
    assert math.isclose(loss_l1_value(p, g), loss_l1_value(p2, g2), rel_tol=1e-12)
    assert math.isclose(f_beta_value(p, g), f_beta_value(p2, g2), rel_tol=1e-12)


def test_loss_gradients():
    g_heat = encode(PointSet(((3.0, 2.0), (6.0, 5.0)), 8, 8),
                    DistributionSpec("gaussian", sigma1=1.5))
    g_bin = encode(PointSet(((3.0, 2.0), (6.0, 5.0)), 8, 8),
                   DistributionSpec("binary"))
    p0 = RNG.uniform(0.05, 0.95, size=(8, 8, 1))

    def build_l1(tape, pn):
        return loss_l1(tape, pn["p"], tape.const(g_heat))

    def build_fb(tape, pn):
        return tape.affine(f_beta_score(tape, pn["p"], tape.const(g_bin)), -1.0, 1.0)

    for build in (build_l1, build_fb):
        report = grad_check(build, {"p": p0}, step=1e-5, tolerance=1e-4)
        assert report.passed, report.max_rel_err


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(beta=0.0)
    with pytest.raises(ValueError):
        LossConfig(variant=3)
