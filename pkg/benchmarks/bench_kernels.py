#!/usr/bin/env python3
"""Time the numba kernels against their numpy twins.

Compilation is excluded by a warm-up call.  Each case also reports the
largest relative difference between the two backends.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from phaseflow import _accel, kernels
from phaseflow import manifolds as M


def _time(fn, repeat: int) -> float:
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(rng: np.random.Generator):
    absp2 = rng.random(1 << 20) ** 4
    weights = rng.random(1 << 20)
    eps2 = (0.2 * 0.5 ** np.arange(6)) ** 2
    yield "reg_log_sums 1M x 6", lambda b: kernels.reg_log_sums(absp2, weights, eps2, backend=b)

    yield "pairwise_sum 1M", lambda b: np.array([kernels.pairwise_sum(weights, backend=b)])

    g = M.random_generator(1, rng, terms=4)
    exps, alphas, centers = g.arrays
    coefs = np.asarray(g.coefficients, dtype=np.complex128)
    rho = (rng.normal(size=(1 << 16, 2)) + 0.05j * rng.normal(size=(1 << 16, 2))).astype(np.complex128)
    yield "generator_eval 64k", lambda b: kernels.generator_eval(rho, exps, alphas, centers, coefs[0], 1, backend=b)[1]

    small = rho[: 1 << 12].copy()
    frames = np.broadcast_to(np.eye(2, dtype=np.complex128), (small.shape[0], 2, 2)).copy()
    yield "rk4_flow 4k nodes x 20 steps", lambda b: kernels.rk4_flow(
        small, frames, exps, alphas, centers, coefs, 0.0, 0.2, 20, True, backend=b)[0]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None, help="write results to this file")
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'case':32s} {'numpy [s]':>11s} {'numba [s]':>11s} {'speedup':>8s} {'rel diff':>10s}")
    for name, fn in _cases(rng):
        t_np = _time(lambda: fn("numpy"), args.repeat)
        t_nb = _time(lambda: fn("numba"), args.repeat)
        a, b = np.asarray(fn("numpy")), np.asarray(fn("numba"))
        diff = float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(a))), 1e-300))
        rows.append({"case": name, "numpy": t_np, "numba": t_nb, "speedup": t_np / t_nb, "relative_diff": diff})
        print(f"{name:32s} {t_np:11.4f} {t_nb:11.4f} {t_np / t_nb:8.2f} {diff:10.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump({"threads": _accel.configure_threads(), "cases": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
