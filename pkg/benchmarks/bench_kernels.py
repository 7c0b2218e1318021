"""Time the hot kernels under each available backend.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--threads 1]

Prints one row per kernel with the best wall time per backend and the
speedup of the compiled kernels over the NumPy fallback.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from adaptint import _backend, analysis
from adaptint.dynamics import AgentSystem, NoiseModel, mean_field_step, step_sync
from adaptint.field import FieldGrid, rhs, stability_bound, step
from adaptint.lattice import euclidean_lattice, fully_connected, sample_disorder


def _system(geom, seed=0):
    st = sample_disorder({"kind": "uniform", "low": 0.5, "high": 1.5}, geom.n_agents, seed, beta=0.5)
    sigma = np.where(np.random.default_rng(seed).random(geom.n_agents) < 0.5, 1, -1)
    return AgentSystem(sigma, geom, st)


def cases(threads):
    lat = _system(euclidean_lattice((128, 128), 2.5))
    full = _system(fully_connected(1024))
    noise = NoiseModel("site", "gaussian", 0.2, seed=1)
    rng = np.random.default_rng(2)
    g2 = FieldGrid(rng.uniform(-1, 1, (256, 256)), rng.uniform(0.5, 1.5, (256, 256)), 1.0, 0.02)
    g3 = FieldGrid(rng.uniform(-1, 1, (48, 48, 48)), rng.uniform(0.5, 1.5, (48, 48, 48)), 1.0, 0.02, 1.0, "open")
    labels = np.where(rng.random(lat.n_agents) < 0.4, -1, 1).astype(np.int8)
    nn = euclidean_lattice((128, 128), 1.1)
    return {
        "step_sync lattice 128^2 R=2.5": lambda: step_sync(lat, noise, threads),
        "step_sync fully connected N=1024": lambda: step_sync(full, noise, threads),
        "mean_field_step lattice 128^2": lambda: mean_field_step(lat, threads),
        "field rhs 256^2": lambda: rhs(g2),
        "field step 48^3 open": lambda: step(g3, 0.5 * stability_bound(g3)),
        "detect_clusters 128^2": lambda: analysis.detect_clusters(labels, nn),
    }


def best_time(fn, repeat):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    backends = _backend.available()
    table = {}
    for name in backends:
        with _backend.use_backend(name):
            for label, fn in cases(args.threads).items():
                table.setdefault(label, {})[name] = best_time(fn, args.repeat)
    width = max(map(len, table))
    head = f"{'kernel':<{width}}  " + "  ".join(f"{b:>10}" for b in backends)
    if "compiled" in backends:
        head += "   speedup"
    print(head)
    for label, row in table.items():
        line = f"{label:<{width}}  " + "  ".join(f"{row[b] * 1e3:8.2f}ms" for b in backends)
        if "compiled" in backends:
            line += f"  {row['python'] / row['compiled']:8.1f}x"
        print(line)


if __name__ == "__main__":
    main()
