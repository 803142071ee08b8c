"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_jit.py [--repeat N]

Both variants run on identical inputs and must agree exactly before any
timing is reported.
"""

import argparse
import time

import numpy as np

from tbstencil import benchmarks
from tbstencil._jit import JIT_AVAILABLE, census_bruteforce, linear_sweep


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_census(repeat):
    args = ((96, 96, 96), (16, 16), 1, 24, [3, 3, 2])
    a = census_bruteforce(*args, use_jit=True)
    b = census_bruteforce(*args, use_jit=False)
    assert (a == b).all()
    return (best_of(lambda: census_bruteforce(*args, use_jit=True), repeat),
            best_of(lambda: census_bruteforce(*args, use_jit=False), repeat))


def bench_sweep(name, shape, repeat):
    spec = benchmarks.load(name, "double")
    lin = spec.linear
    offs = [o for _, o in lin.terms]
    coefs = [float(c) for c, _ in lin.terms]
    div = 1.0 if lin.divisor is None else float(lin.divisor)
    rad = spec.radius
    src = np.random.default_rng(0).random(tuple(s + 2 * rad for s in shape))
    out_j, out_n = src.copy(), src.copy()
    linear_sweep(src, out_j, offs, coefs, div, rad, use_jit=True)
    linear_sweep(src, out_n, offs, coefs, div, rad, use_jit=False)
    assert np.array_equal(out_j, out_n)
    return (best_of(lambda: linear_sweep(src, out_j, offs, coefs, div, rad, use_jit=True), repeat),
            best_of(lambda: linear_sweep(src, out_n, offs, coefs, div, rad, use_jit=False), repeat))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not JIT_AVAILABLE:
        print("numba is not installed; only the numpy variants exist")
        return
    rows = [("census brute force 96^3", *bench_census(args.repeat))]
    for name, shape in (("j2d5pt", (2048, 2048)), ("box2d2r", (1024, 1024)), ("j3d27pt", (128, 128, 128))):
        rows.append((f"naive sweep {name} {'x'.join(map(str, shape))}", *bench_sweep(name, shape, args.repeat)))
    print(f"{'kernel':<36} {'numba s':>9} {'numpy s':>9} {'speedup':>8}")
    for label, tj, tn in rows:
        print(f"{label:<36} {tj:>9.4f} {tn:>9.4f} {tn / tj:>8.1f}")


if __name__ == "__main__":
    main()
