"""Benchmark the compiled persistence kernel against the pure-Python twin.

Usage::

    python benchmarks/bench_ph.py [--sizes 32,48,64] [--repeats 3]

The python kernel is only run up to --python-max (default 48) voxels per
side; the compiled kernel continues to the largest requested size.
"""

import argparse
import time

import numpy as np

from toposculpt import Volume, compute_ph0
from toposculpt.cubical_ph import HAVE_COMPILED


def time_backend(vol, backend, repeats):
    best = float("inf")
    pairs = 0
    for _ in range(repeats):
        t0 = time.perf_counter()
        bc = compute_ph0(vol, backend=backend)
        best = min(best, time.perf_counter() - t0)
        pairs = len(bc)
    return best, pairs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="32,48,64,96")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--python-max", type=int, default=48)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)
    print(f"compiled kernel available: {HAVE_COMPILED}")
    print(f"{'size':>6} {'pairs':>8} {'python (s)':>12} {'compiled (s)':>13} {'speedup':>8}")
    for n in sizes:
        vol = Volume(rng.random((n, n, n)))
        t_py = None
        if n <= args.python_max:
            t_py, pairs = time_backend(vol, "python", args.repeats)
        t_c = None
        if HAVE_COMPILED:
            t_c, pairs = time_backend(vol, "compiled", args.repeats)
        speedup = f"{t_py / t_c:7.1f}x" if (t_py and t_c) else "-"
        py_s = f"{t_py:12.3f}" if t_py else f"{'-':>12}"
        c_s = f"{t_c:13.3f}" if t_c else f"{'-':>13}"
        print(f"{n:>6} {pairs:>8} {py_s} {c_s} {speedup:>8}")


if __name__ == "__main__":
    main()
