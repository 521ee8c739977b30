"""Compare the compiled and pure-Python graphical lasso kernels.

Usage: python benchmarks/bench_kernels.py [--dims 20 50 100] [--rho 0.1] [--repeat 3]
"""

import argparse
import time

import numpy as np

from transposable import _kernels
from transposable.core import make_structured_cov, rng_for
from transposable.trcm import glasso


def sample_cov(dim, seed=0):
    Sigma = make_structured_cov("block_ar1", dim, 0.7, block=dim // 5 or 1)
    root = np.linalg.cholesky(Sigma)
    z = root @ rng_for(seed, dim).standard_normal((dim, 2 * dim))
    return z @ z.T / (2 * dim)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--dims", type=int, nargs="+", default=[20, 50, 100])
    parser.add_argument("--rho", type=float, default=0.1)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    try:
        _kernels.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled extension not built; run pip install -e . first")
    print(f"{'dim':>5} {'cython s':>10} {'python s':>10} {'speedup':>8} {'max |diff|':>11}")
    for dim in args.dims:
        S = sample_cov(dim)
        tc, Tc = best_of(lambda: glasso(S, args.rho, backend="cython"), args.repeat)
        tp, Tp = best_of(lambda: glasso(S, args.rho, backend="python"), args.repeat)
        print(f"{dim:>5} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f} "
              f"{np.abs(Tc - Tp).max():>11.2e}")


if __name__ == "__main__":
    main()
