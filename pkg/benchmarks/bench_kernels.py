"""Compiled vs pure-numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--n 100000] [--grid 601] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from perfpower import kernels


def cases(n, k):
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(-2, 2, n))
    w = 1 / (1 + np.exp(-4 * x))
    thetas = np.linspace(-3, 3, k)
    phis = thetas[:: max(1, k // 20)]
    return {
        "threshold_displacement": lambda b: kernels.threshold_displacement(x, x, 1.0, 1.0, thetas, backend=b),
        "zero_one_risk_sums": lambda b: kernels.zero_one_risk_sums(x, w, 1.0, 1.0, phis, thetas, backend=b),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--grid", type=int, default=601)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"n={args.n} grid={args.grid} default backend={kernels.BACKEND}")
    print(f"{'kernel':<24}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases(args.n, args.grid).items():
        t = {b: min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends}
        speed = t["python"] / t["compiled"] if "compiled" in t else float("nan")
        print(f"{name:<24}" + "".join(f"{t[b] * 1e3:>10.2f}ms" for b in backends) + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
