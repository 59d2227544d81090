#!/usr/bin/env python3
"""Benchmark the compiled core against the pure-numpy fallback.

Runs the hot kernels on representative workloads and prints a table of
times and speedups.  Both backends consume identical pre-generated noise,
so the outputs are also checked for agreement while timing.

    python benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from coulomb_lab.backend import available_backends
from coulomb_lab.noise import NoiseStream


def _time(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_sde(backends, n, steps, repeat):
    rng = np.random.default_rng(n)
    pos0 = rng.normal(size=(n, 2))
    signs = rng.choice([-1.0, 1.0], size=n)
    order = np.arange(n, dtype=np.intp)
    noise = NoiseStream(1, 2).block_normals(n, 0, steps)
    rec = np.array([0, steps], dtype=np.int64)
    alphas = np.array([0.5])
    rows = {}
    for name, mod in backends.items():
        t, out = _time(
            lambda m=mod: m.sde_path(
                pos0, signs, order, 1.0, 0.4, 1e-3, 10.0, 1e-4, steps, noise,
                rec, alphas, True, True,
            ),
            repeat,
        )
        rows[name] = (t, out["final_positions"])
    return f"sde_path N={n} steps={steps}", rows


def bench_besq(backends, paths, steps, repeat):
    ns = NoiseStream(3, 4)
    noise = np.stack([ns.scalar_normals(p, 0, steps) for p in range(paths)])
    rows = {}
    for name, mod in backends.items():
        t, out = _time(
            lambda m=mod: m.besq_em_batch(0.5, 1.0, 1e-4, steps, noise, False, 1e-3, 4e-3),
            repeat,
        )
        rows[name] = (t, out["min_R"])
    return f"besq_em_batch paths={paths} steps={steps}", rows


def bench_forces(backends, b, n, repeat):
    rng = np.random.default_rng(7)
    pos = rng.normal(size=(b, n, 2))
    signs = rng.choice([-1.0, 1.0], size=n)
    rows = {}
    for name, mod in backends.items():
        t, out = _time(lambda m=mod: m.signed_force_fields(pos, signs), repeat)
        rows[name] = (t, out)
    return f"signed_force_fields batch={b} N={n}", rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if len(backends) < 2:
        print("compiled core not built; run pip install -e . --no-build-isolation")

    q = args.quick
    cases = [
        bench_sde(backends, 2, 20_000 if q else 100_000, 3),
        bench_sde(backends, 64, 200 if q else 1_000, 3),
        bench_sde(backends, 512, 5 if q else 40, 2),
        bench_besq(backends, 500 if q else 2_000, 2_000 if q else 10_000, 3),
        bench_forces(backends, 10 if q else 50, 256, 3),
    ]

    width = max(len(label) for label, _ in cases)
    print(f"\n{'workload':<{width}}  {'python':>10}  {'cython':>10}  {'speedup':>8}")
    for label, rows in cases:
        tp = rows.get("python", (np.nan, None))[0]
        tc = rows.get("cython", (np.nan, None))[0]
        if "python" in rows and "cython" in rows:
            ok = np.allclose(rows["python"][1], rows["cython"][1], rtol=1e-12, atol=1e-14)
            tag = "" if ok else "  MISMATCH"
            print(f"{label:<{width}}  {tp:>9.3f}s  {tc:>9.3f}s  {tp / tc:>7.1f}x{tag}")
        else:
            only = "python" if "python" in rows else "cython"
            print(f"{label:<{width}}  {only} only: {rows[only][0]:.3f}s")


if __name__ == "__main__":
    main()
