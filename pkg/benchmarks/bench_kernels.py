#!/usr/bin/env python3
"""Throughput comparison of the numba and numpy kernel paths.

Runs the convolution and soft-argmax kernels on the layer shapes the
default detector actually executes, plus one warm-up pass so numba
compilation does not pollute the timings.

    python benchmarks/bench_kernels.py [--repeat N]

The package-level backend switch is SUTUREPOINT_NO_NUMBA=1; this script
imports both implementations directly, so the flag is not needed here.
"""

import argparse
import time

import numpy as np

from suturepoint._kernels import numba_impl, numpy_impl

# (H, W, Cin, Cout) of the 3x3 convs in the depth-3, base-8 detector at 64x96
CONV_SHAPES = [
    (64, 96, 3, 8), (64, 96, 8, 8),
    (32, 48, 8, 16), (32, 48, 16, 16),
    (16, 24, 16, 32), (16, 24, 32, 32),
    (32, 48, 48, 16), (64, 96, 24, 8),
]


def timeit(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_conv(impl, repeat):
    rng = np.random.default_rng(0)
    cases = []
    for h, w, cin, cout in CONV_SHAPES:
        xp = rng.normal(size=(h + 2, w + 2, cin))
        k = rng.normal(size=(3, 3, cin, cout))
        b = np.zeros(cout)
        cases.append((xp, k, b))

    def fwd():
        for xp, k, b in cases:
            impl.conv2d_forward(xp, k, b, 1)

    outs = [impl.conv2d_forward(xp, k, b, 1) for xp, k, b in cases]

    def bwd():
        for (xp, k, _), out in zip(cases, outs):
            impl.conv2d_backward(xp, k, out, 1)

    fwd()
    bwd()  # warm-up / compile
    macs = sum(h * w * cin * cout * 9 for h, w, cin, cout in CONV_SHAPES)
    t_fwd = timeit(fwd, repeat)
    t_bwd = timeit(bwd, repeat)
    return t_fwd, t_bwd, macs


def bench_softargmax(impl, repeat):
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(64, 96))
    out = impl.softargmax3_forward(x, 0.1)
    gout = rng.normal(size=x.shape)
    impl.softargmax3_backward(x, out, gout, 0.1)  # warm-up

    t_fwd = timeit(lambda: impl.softargmax3_forward(x, 0.1), repeat)
    t_bwd = timeit(lambda: impl.softargmax3_backward(x, out, gout, 0.1), repeat)
    return t_fwd, t_bwd


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    rows = []
    for name, impl in (("numba", numba_impl), ("numpy", numpy_impl)):
        cf, cb, macs = bench_conv(impl, args.repeat)
        sf, sb = bench_softargmax(impl, args.repeat)
        rows.append((name, cf, cb, macs, sf, sb))

    print(f"{'backend':8s} {'conv fwd':>10s} {'conv bwd':>10s} {'GMAC/s':>8s} "
          f"{'sam fwd':>10s} {'sam bwd':>10s}")
    for name, cf, cb, macs, sf, sb in rows:
        print(f"{name:8s} {cf * 1e3:8.2f}ms {cb * 1e3:8.2f}ms "
              f"{macs / cf / 1e9:8.2f} {sf * 1e3:8.2f}ms {sb * 1e3:8.2f}ms")
    base = rows[1]
    fast = rows[0]
    print(f"\nconv speedup numba/numpy: fwd x{base[1] / fast[1]:.1f}, "
          f"bwd x{base[2] / fast[2]:.1f}; "
          f"softargmax: fwd x{base[4] / fast[4]:.1f}, bwd x{base[5] / fast[5]:.1f}")


if __name__ == "__main__":
    main()
