"""Time the compiled and numpy population kernels on the same blocks.

    python3 benchmarks/bench_synth.py [--economies 20] [--individuals 200000] [--repeat 5]
"""
import argparse
import statistics
import time

import numpy as np

from aiusershare.synth import _kernels_py

try:
    from aiusershare.synth import _kernels as _kernels_c
except ImportError:
    _kernels_c = None

ARGS = (0.6, 0.8, 1.0, 3000, 0.25, 0.5, 0.25)


def run(kernels, seed, economies, n, rho):
    out = None
    for e in range(economies):
        out = kernels.generate_block(seed, e, n, *ARGS, rho)
    return out


def timed(kernels, seed, economies, n, rho, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        run(kernels, seed, economies, n, rho)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--economies", type=int, default=20)
    ap.add_argument("--individuals", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rho", type=float, default=0.0)
    args = ap.parse_args()

    total = args.economies * args.individuals
    py = timed(_kernels_py, 7, args.economies, args.individuals, args.rho, args.repeat)
    print(f"individuals: {total:,}")
    print(f"numpy   {py:8.3f} s  {total / py / 1e6:7.1f} M/s")
    if _kernels_c is None:
        print("cython  not built")
        return
    c = timed(_kernels_c, 7, args.economies, args.individuals, args.rho, args.repeat)
    print(f"cython  {c:8.3f} s  {total / c / 1e6:7.1f} M/s  ({py / c:.1f}x)")
    fc, mc = _kernels_c.generate_block(7, 0, 10_000, *ARGS, args.rho)
    fp, mp = _kernels_py.generate_block(7, 0, 10_000, *ARGS, args.rho)
    same = np.array_equal(np.asarray(fc), fp) and np.array_equal(np.asarray(mc), mp)
    print(f"outputs identical: {same}")


if __name__ == "__main__":
    main()
