"""Finite-difference verification of tape gradients.

Central differences with configurable step; relative error is
|a - n| / max(|a|, |n|, 1e-8). The op and layer suites run on small random
grids generated away from ReLU/max-pool kinks; the model suite checks the
full two-stage network loss at depth 1 on a sampled subset of parameters.

Setting SUTUREPOINT_GRADCHECK_FAULT=<case name> corrupts that case's
analytic gradient by 1.01 (negative-control hook for the test suite).
"""

import os
from dataclasses import dataclass

import numpy as np

from .tape import Tape

FAULT_ENV = "SUTUREPOINT_GRADCHECK_FAULT"


@dataclass
class GradCheckReport:
    per_param: dict
    max_rel_err: float
    tolerance: float
    worst_param: str

    @property
    def passed(self):
        return self.max_rel_err <= self.tolerance


def _loss_value(build, params):
    tape = Tape()
    pnodes = {k: tape.param(k, v) for k, v in params.items()}
    loss = build(tape, pnodes)
    return float(tape.value(loss).ravel()[0])


def grad_check(build, params, step=1e-5, tolerance=1e-4, sample=None, rng=None,
               analytic_scale=1.0):
    """Compare analytic gradients of ``build`` against central differences.

    ``build(tape, pnodes) -> loss node`` defines the function; ``params`` maps
    names to arrays. ``sample`` limits the number of checked entries per
    parameter (all entries when None). ``analytic_scale`` deliberately skews
    the analytic side and exists for negative-control tests.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    params = {k: np.asarray(v, dtype=np.float64) for k, v in params.items()}
    tape = Tape()
    pnodes = {k: tape.param(k, v) for k, v in params.items()}
    loss = build(tape, pnodes)
    grads = tape.backward(loss)

    per_param = {}
    worst = ("", 0.0)
    for name, value in params.items():
        flat = value.ravel()
        idx = np.arange(flat.size)
        if sample is not None and flat.size > sample:
            gen = rng if rng is not None else np.random.default_rng(0)
            idx = gen.choice(flat.size, size=sample, replace=False)
        worst_err = 0.0
        analytic = np.asarray(grads[name], dtype=np.float64).reshape(value.shape).ravel()
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            f_plus = _loss_value(build, params)
            flat[i] = orig - step
            f_minus = _loss_value(build, params)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = analytic[i] * analytic_scale
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst_err = max(worst_err, err)
        per_param[name] = worst_err
        if worst_err >= worst[1]:
            worst = (name, worst_err)
    return GradCheckReport(per_param, worst[1], tolerance, worst[0])


# ---------------------------------------------------------------------------
# check suites used by the CLI


def _margin_from_zero(rng, shape, low=0.1, high=1.0):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


def _distinct_grid(rng, shape):
    # permutation -> pairwise gaps of 1/n, far beyond the FD step
    n = int(np.prod(shape))
    return rng.permutation(n).astype(np.float64).reshape(shape) / n


def op_cases(seed=0):
    """(name, build, params) triples covering every recorded tape op."""
    rng = np.random.default_rng(seed)
    cases = []

    x = rng.normal(size=(5, 5, 2))
    k = rng.normal(size=(3, 3, 2, 3)) * 0.5
    b = rng.normal(size=(1, 1, 3)) * 0.1

    def build_conv(tape, p):
        out = tape.conv2d(p["x"], p["k"], p["b"], stride=1, padding=1)
        return tape.sum_all(tape.mul(out, out))

    cases.append(("conv2d", build_conv, {"x": x, "k": k, "b": b}))

    xr = _margin_from_zero(rng, (4, 6, 2))
    c = rng.normal(size=(4, 6, 2))

    def build_relu(tape, p):
        return tape.sum_all(tape.mul(tape.relu(p["x"]), tape.const(c)))

    cases.append(("relu", build_relu, {"x": xr}))

    xs = rng.normal(size=(4, 6, 2))
    cs = rng.normal(size=(4, 6, 2))

    def build_sigmoid(tape, p):
        return tape.sum_all(tape.mul(tape.sigmoid(p["x"]), tape.const(cs)))

    cases.append(("sigmoid", build_sigmoid, {"x": xs}))

    xm = _distinct_grid(rng, (4, 6, 2))
    cm = rng.normal(size=(2, 3, 2))

    def build_maxpool(tape, p):
        return tape.sum_all(tape.mul(tape.maxpool2(p["x"]), tape.const(cm)))

    cases.append(("maxpool2", build_maxpool, {"x": xm}))

    xu = rng.normal(size=(3, 4, 2))
    cu = rng.normal(size=(6, 8, 2))

    def build_upsample(tape, p):
        return tape.sum_all(tape.mul(tape.upsample2(p["x"]), tape.const(cu)))

    cases.append(("upsample_nearest", build_upsample, {"x": xu}))

    xa = rng.normal(size=(4, 5, 2))
    xb = rng.normal(size=(4, 5, 3))
    cc = rng.normal(size=(4, 5, 5))

    def build_concat(tape, p):
        cat = tape.concat_channels(p["a"], p["b"])
        return tape.sum_all(tape.mul(cat, tape.const(cc)))

    cases.append(("concat_channels", build_concat, {"a": xa, "b": xb}))

    ya = rng.normal(size=(4, 4, 1))
    yb = rng.normal(size=(4, 4, 1))

    def build_arith(tape, p):
        mixed = tape.mul(tape.add(p["a"], p["b"]),
                         tape.sub(p["a"], tape.affine(p["b"], 0.5, 0.2)))
        return tape.sum_all(mixed)

    cases.append(("elementwise_arith", build_arith, {"a": ya, "b": yb}))

    ra = rng.uniform(0.1, 0.9, size=(5, 5, 1))
    rb = rng.uniform(0.1, 0.9, size=(5, 5, 1))

    def build_ratio(tape, p):
        num = tape.affine(tape.sum_all(tape.mul(p["a"], p["b"])), 2.0, 1e-6)
        den = tape.affine(tape.add(tape.sum_all(p["a"]), tape.sum_all(p["b"])),
                          1.0, 1e-6)
        return tape.div(num, den)

    cases.append(("sum_div_ratio", build_ratio, {"a": ra, "b": rb}))
    return cases


def layer_cases(seed=0):
    from .layers import GaussianLayerSpec, SoftArgmaxSpec, conv_soft_argmax, gaussian_filter

    rng = np.random.default_rng(seed)
    cases = []

    xg = rng.uniform(0.0, 1.0, size=(9, 9, 1))
    cg = rng.normal(size=(9, 9, 1))

    def build_gauss(tape, p):
        out = gaussian_filter(tape, p["x"], GaussianLayerSpec(sigma2=1.0))
        return tape.sum_all(tape.mul(out, tape.const(cg)))

    cases.append(("gaussian_filter", build_gauss, {"x": xg}))

    for temp in (0.1, 1.0):
        xs = _distinct_grid(rng, (7, 8, 1))
        csm = rng.normal(size=(7, 8, 1))

        def build_sam(tape, p, _t=temp, _c=csm):
            out = conv_soft_argmax(tape, p["x"], SoftArgmaxSpec(temperature=_t))
            return tape.sum_all(tape.mul(out, tape.const(_c)))

        cases.append((f"conv_soft_argmax_T{temp}", build_sam, {"x": xs}))
    return cases


def model_cases(seed=0):
    from .losses import LossConfig, loss_total
    from .model import ModelConfig, build_forward, build_model

    rng = np.random.default_rng(seed)
    cases = []
    for variant in (1, 2):
        cfg = ModelConfig(input_height=16, input_width=16, depth=1, base_channels=4,
                          sigma1=2.0, sigma2=1.0, variant=variant)
        weights = build_model(cfg, seed=seed + variant)
        image = rng.uniform(0.0, 1.0, size=(16, 16, 3))
        g_heat = np.zeros((16, 16))
        g_bin = np.zeros((16, 16))
        g_bin[5, 7] = 1.0
        g_bin[11, 3] = 1.0
        yy, xx = np.mgrid[0:16, 0:16]
        for py, px in ((5, 7), (11, 3)):
            g_heat = np.maximum(
                g_heat, np.exp(-((xx - px) ** 2 + (yy - py) ** 2) / (2 * cfg.sigma1**2))
            )

        def build(tape, p, _cfg=cfg, _img=image, _gh=g_heat, _gb=g_bin):
            s1, s2 = build_forward(tape, _cfg, p, _img)
            return loss_total(tape, s1, s2, tape.const(_gh), tape.const(_gb),
                              LossConfig(variant=_cfg.variant))

        cases.append((f"model_variant{variant}", build, weights))
    return cases


def run_suite(scopes, tolerance=1e-4, model_tolerance=1e-3, step=1e-5, seed=0):
    """Run the named scopes ('ops', 'layers', 'model'); returns result rows."""
    fault = os.environ.get(FAULT_ENV, "")
    rows = []
    for scope in scopes:
        if scope == "ops":
            cases, tol, sample = op_cases(seed), tolerance, None
        elif scope == "layers":
            cases, tol, sample = layer_cases(seed), tolerance, None
        elif scope == "model":
            cases, tol, sample = model_cases(seed), model_tolerance, None
        else:
            raise ValueError(f"unknown gradcheck scope {scope!r}")
        for name, build, params in cases:
            report = grad_check(
                build, params, step=step, tolerance=tol, sample=sample,
                rng=np.random.default_rng(seed),
                analytic_scale=1.01 if fault == name else 1.0,
            )
            rows.append((scope, name, report))
    return rows
