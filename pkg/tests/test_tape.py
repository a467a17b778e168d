import numpy as np
import pytest

from suturepoint.gradcheck import grad_check, op_cases
from suturepoint.tape import Tape


def scalar(tape, nid):
    return float(tape.value(nid).ravel()[0])


def test_conv_identity_scale():
    t = Tape()
    x = t.const(np.full((1, 1, 1), 3.0))
    k = t.const(np.full((1, 1, 1, 1), 2.0))
    b = t.const(np.zeros(1))
    out = t.conv2d(x, k, b)
    assert scalar(t, out) == 6.0


def test_conv_zero_kernel_gives_bias():
    t = Tape()
    x = t.const(np.random.default_rng(0).normal(size=(5, 7, 2)))
    k = t.const(np.zeros((3, 3, 2, 4)))
    b = t.const(np.array([0.1, 0.2, 0.3, 0.4]))
    out = t.conv2d(x, k, b, padding=1)
    expect = np.broadcast_to([0.1, 0.2, 0.3, 0.4], (5, 7, 4))
    np.testing.assert_allclose(t.value(out), expect)


def test_conv_identity_kernel_is_identity():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(6, 5, 3))
    for size in (1, 3, 5):
        k = np.zeros((size, size, 3, 3))
        for c in range(3):
            k[size // 2, size // 2, c, c] = 1.0
        t = Tape()
        out = t.conv2d(t.const(x), t.const(k), t.const(np.zeros(3)),
                       padding=size // 2)
        np.testing.assert_allclose(t.value(out), x, atol=1e-15)


def test_conv_shape_mismatch_rejected():
    t = Tape()
    x = t.const(np.zeros((4, 4, 2)))
    k = t.const(np.zeros((3, 3, 3, 1)))
    b = t.const(np.zeros(1))
    with pytest.raises(ValueError, match="channel mismatch"):
        t.conv2d(x, k, b, padding=1)
    with pytest.raises(ValueError, match="odd"):
        t.conv2d(x, t.const(np.zeros((2, 2, 2, 1))), b)
    with pytest.raises(ValueError, match="empty"):
        t.conv2d(x, t.const(np.zeros((5, 5, 2, 1))), b, padding=0, stride=5)


def test_relu_values():
    t = Tape()
    out = t.relu(t.const(np.array([[-1.0], [0.0], [2.0]])))
    np.testing.assert_array_equal(t.value(out).ravel(), [0.0, 0.0, 2.0])
    pos = np.random.default_rng(2).uniform(0.5, 1.0, size=(3, 3, 2))
    t2 = Tape()
    np.testing.assert_array_equal(t2.value(t2.relu(t2.const(pos))), pos)


def test_sigmoid_values():
    t = Tape()
    assert scalar(t, t.sigmoid(t.const(np.zeros((1, 1, 1))))) == 0.5
    sat = scalar(t, t.sigmoid(t.const(np.full((1, 1, 1), -50.0))))
    assert 0.0 < sat < 1e-20
    assert np.isfinite(sat)


def test_maxpool_basics():
    t = Tape()
    out = t.maxpool2(t.const(np.array([[1.0, 2.0], [3.0, 4.0]])))
    assert scalar(t, out) == 4.0
    const = np.full((6, 8, 2), 0.7)
    t2 = Tape()
    pooled = t2.value(t2.maxpool2(t2.const(const)))
    assert pooled.shape == (3, 4, 2)
    np.testing.assert_array_equal(pooled, np.full((3, 4, 2), 0.7))
    with pytest.raises(ValueError, match="even"):
        t2.maxpool2(t2.const(np.zeros((3, 4, 1))))


def test_maxpool_tie_routes_first_rowmajor():
    t = Tape()
    p = t.param("x", np.full((2, 2, 1), 1.0))
    loss = t.sum_all(t.maxpool2(p))
    g = t.backward(loss)["x"]
    np.testing.assert_array_equal(g.ravel(), [1.0, 0.0, 0.0, 0.0])


def test_upsample_basics():
    t = Tape()
    out = t.value(t.upsample2(t.const(np.full((1, 1, 1), 7.0))))
    np.testing.assert_array_equal(out, np.full((2, 2, 1), 7.0))
    t2 = Tape()
    up = t2.value(t2.upsample2(t2.const(np.zeros((3, 5, 2)))))
    assert up.shape == (6, 10, 2)


def test_concat_channels():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(4, 5, 2)), rng.normal(size=(4, 5, 3))
    t = Tape()
    cat = t.value(t.concat_channels(t.const(a), t.const(b)))
    assert cat.shape == (4, 5, 5)
    np.testing.assert_array_equal(cat[:, :, :2], a)
    np.testing.assert_array_equal(cat[:, :, 2:], b)
    empty = np.zeros((4, 5, 0))
    t2 = Tape()
    same = t2.value(t2.concat_channels(t2.const(a), t2.const(empty)))
    np.testing.assert_array_equal(same, a)
    with pytest.raises(ValueError, match="spatial mismatch"):
        t2.concat_channels(t2.const(a), t2.const(np.zeros((5, 5, 1))))


def test_backward_sum_gives_ones():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(3, 4, 2))
    t = Tape()
    p = t.param("x", x)
    g = t.backward(t.sum_all(p))["x"]
    np.testing.assert_array_equal(g, np.ones_like(x))
    t2 = Tape()
    p2 = t2.param("x", x)
    g2 = t2.backward(t2.sum_all(t2.affine(p2, 2.0)))["x"]
    np.testing.assert_array_equal(g2, np.full_like(x, 2.0))


def test_backward_rejects_nonscalar_loss():
    t = Tape()
    p = t.param("x", np.zeros((2, 2, 1)))
    with pytest.raises(ValueError, match="scalar"):
        t.backward(p)


def test_fanout_accumulates():
    # y = x*x + x  ->  dy/dx = 2x + 1
    t = Tape()
    xv = np.array([[1.5, -2.0], [0.5, 3.0]])
    p = t.param("x", xv)
    loss = t.sum_all(t.add(t.mul(p, p), p))
    g = t.backward(loss)["x"][:, :, 0]
    np.testing.assert_allclose(g, 2 * xv + 1)


def test_forward_bit_identical_across_runs():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(8, 8, 3))
    k = rng.normal(size=(3, 3, 3, 4))

    def run():
        t = Tape()
        out = t.relu(t.conv2d(t.const(x), t.const(k), t.const(np.zeros(4)),
                              padding=1))
        return t.value(t.maxpool2(out)).tobytes()

    assert run() == run()


def test_outputs_stay_finite():
    rng = np.random.default_rng(6)
    t = Tape()
    x = t.const(rng.normal(size=(8, 8, 2)) * 30)
    k = t.const(rng.normal(size=(3, 3, 2, 2)))
    y = t.sigmoid(t.conv2d(x, k, t.const(np.zeros(2)), padding=1))
    y = t.upsample2(t.maxpool2(t.relu(y)))
    assert np.isfinite(t.value(y)).all()


def test_every_op_passes_gradient_check():
    for name, build, params in op_cases(seed=11):
        report = grad_check(build, params, step=1e-5, tolerance=1e-4)
        assert report.passed, f"{name}: max rel err {report.max_rel_err}"
