"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import math
import timeit

import numpy as np

from eigencap import _kernels_py, simcore
from eigencap.simcore import _circuit_args

try:
    from eigencap import _kernels as _compiled
except ImportError:
    _compiled = None


def cases():
    for L, N in ((4, 2000), (6, 2000), (8, 500), (10, 100)):
        sp = simcore.random_encoding("circuit", L, math.pi / 2, seed=0)
        us = np.linspace(-1, 1, N)
        args = _circuit_args(sp)
        yield f"circuit_probabilities L={L} N={N}", lambda m, a=args, u=us: m.circuit_probabilities(*a, u)
    for L, N in ((6, 5000), (10, 500)):
        x = np.random.default_rng(0).random((N, 1 << L))
        yield f"fwht L={L} N={N}", lambda m, x=x: m.fwht(x)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<36}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases():
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:<36}{t_py:12.2f}{'n/a':>12}{'':>10}")
            continue
        t_cy = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<36}{t_py:12.2f}{t_cy:12.2f}{t_py / t_cy:9.1f}x")


if __name__ == "__main__":
    main()
