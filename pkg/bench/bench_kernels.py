"""Time the relaxation sweep for the compiled and NumPy backends.

    python3 bench/bench_kernels.py [--sizes 32 64 128] [--sweeps 200]

Both backends must produce bit-identical fields; the script checks that too.
"""

import argparse
import time

import numpy as np

from natgrad.solver import Domain2D, build_grid, kernels


def field(h):
    grid = build_grid(Domain2D.disc(2, 0, 0.5), h)
    v = (grid.X**2 + grid.Y**2) ** (2 / 3)
    return grid, v, np.full(grid.shape, 64 / 81)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--sweeps", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    py = kernels.backend_module("python")
    try:
        cy = kernels.backend_module("cython")
    except ImportError:
        cy = None
        print("compiled kernels not built; timing the NumPy backend only")

    print(f"{'scheme':<10} {'1/h':>5} {'nodes':>7} {'python s':>10} {'cython s':>10} {'speedup':>8} identical")
    for scheme, code in kernels.SCHEMES.items():
        for n in args.sizes:
            grid, v, h0 = field(1 / n)
            run = lambda mod: mod.relax(v, grid.mask, h0, grid.h, 0.2, code, args.sweeps)
            tp, (vp, _) = best_of(lambda: run(py), args.repeat)
            if cy is None:
                print(f"{scheme:<10} {n:>5} {int(grid.mask.sum()):>7} {tp:>10.4f} {'-':>10} {'-':>8} -")
                continue
            tc, (vc, _) = best_of(lambda: run(cy), args.repeat)
            same = np.array_equal(vp, vc)
            print(f"{scheme:<10} {n:>5} {int(grid.mask.sum()):>7} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x {same}")


if __name__ == "__main__":
    main()
