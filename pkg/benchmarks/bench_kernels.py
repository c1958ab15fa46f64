"""Compare the numba and pure-numpy run-length kernels.

Both kernels read the same counter-based random stream, so the benchmark
also checks that they return identical run lengths.

    python benchmarks/bench_kernels.py --replicates 10001 --repeat 3
"""
import argparse
import time

import numpy as np

from ecpchart import _kernels
from ecpchart.chart import ChartConfig, Variant
from ecpchart.engine import _design
from ecpchart.misclass import MisclassMatrix

CASES = {
    # name: (p0, lambda, n, pi, L) -- in-control, ARL0 near 370
    "n5_p05_l05": (0.05, 0.05, 5, 0.95, 2.454),
    "n20_p5_l2": (0.5, 0.2, 20, 0.99, 2.59),
}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--replicates", type=int, default=10001)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=20240370)
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        print("numba is not available; only the numpy kernel can run")
    print(f"{'case':<12} {'numpy s':>9} {'numba s':>9} {'speedup':>8} {'mean RL':>9} identical")
    for name, (p0, lam, n, pv, l) in CASES.items():
        cfg = ChartConfig(p0=p0, lam=lam, n=n, replicates=args.replicates, seed=args.seed)
        d = _design(Variant.TRUE, cfg, MisclassMatrix.symmetric(pv), p0, "surrogate")
        ucl = d.center + l * d.sigma
        call = (cfg.seed, 1, cfg.replicates + 1, d.cdf, d.values, d.center, cfg.lam, ucl)
        t_np, out_np = best_time(lambda: _kernels.run_lengths_numpy(*call), args.repeat)
        if _kernels.HAVE_NUMBA:
            _kernels.run_lengths_numba(*call)  # compile outside the timing
            t_nb, out_nb = best_time(lambda: _kernels.run_lengths_numba(*call), args.repeat)
            same = np.array_equal(out_np[0], out_nb[0])
            print(f"{name:<12} {t_np:9.3f} {t_nb:9.3f} {t_np / t_nb:8.1f} {out_np[0].mean():9.1f} {same}")
        else:
            print(f"{name:<12} {t_np:9.3f} {'-':>9} {'-':>8} {out_np[0].mean():9.1f} -")


if __name__ == "__main__":
    main()
