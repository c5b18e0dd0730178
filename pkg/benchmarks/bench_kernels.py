"""Compare the compiled kernels with the numpy fallback on tree-sized workloads.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3] [--threads 0]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qprdc import kernels
from qprdc.model import ModelParams, state_cov, transport_matrix
from qprdc.quantizer import gaussian_grid
from qprdc.tree import GridSizes, build_tree


def _best_of(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def workloads(threads: int):
    rng = np.random.default_rng(0)
    gx, gy = gaussian_grid(100, 1.3), gaussian_grid(10, 0.02)
    src_x, src_y = gaussian_grid(100, 1.0).points, gaussian_grid(10, 0.015).points
    mx, my = np.repeat(src_x, 10), np.tile(src_y, 100)
    yield ("rect_probs 1000 x 1000 (2D N=1000, rho=0.4)",
           lambda b: b.rect_probs(mx, my, gx.edges, gy.edges, 0.5, 0.05, 0.4, threads))

    u = rng.normal(size=200_000)
    v = rng.normal(size=200_000)
    yield ("bvn_cdf 200000 points (rho=-0.7)", lambda b: b.bvn_cdf(u, v, -0.7))

    # layer-1 nodes of a 4D tree (m=1) pushed one year forward, as in the MC transitions
    p = ModelParams(s0=88.17, sigma_s=0.5, sigma_d=0.05, sigma_f=0.05, rho_sd=0.1574,
                    rho_sf=-0.0272, rho_df=0.6558)
    layer = build_tree(p, [1.0, 2.0], GridSizes("4d", (40, 10, 4, 1)), with_transitions=False).layers[1]
    base = np.stack([layer.coords(n) for n in layer.names], axis=1) @ transport_matrix(p, 1.0).T
    mids = [gaussian_grid(n, v).midpoints for n, v in zip((40, 10, 4, 1), np.diag(state_cov(p, 2.0)))]
    incr = rng.normal(size=(20_000, 4)) * np.sqrt(np.diag(state_cov(p, 1.0)))
    yield ("mc_counts 1600 sources x 20000 samples (4D m=1)",
           lambda b: b.mc_counts(base, incr, mids, threads))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.compiled_backend is None:
        print("compiled extension not built; only the numpy backend is timed")
    print(f"{'workload':<52} {'numpy [s]':>10} {'cython [s]':>11} {'speed-up':>9}")
    for name, fn in workloads(args.threads):
        t_py = _best_of(lambda: fn(kernels.python_backend), args.repeat)
        if kernels.compiled_backend is None:
            print(f"{name:<52} {t_py:>10.3f} {'-':>11} {'-':>9}")
            continue
        t_cy = _best_of(lambda: fn(kernels.compiled_backend), args.repeat)
        print(f"{name:<52} {t_py:>10.3f} {t_cy:>11.3f} {t_py / t_cy:>8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
