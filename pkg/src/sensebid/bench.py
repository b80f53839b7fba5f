"""Benchmark the greedy kernel backends on synthetic coverage instances.

Run with `python -m sensebid.bench [--users N ...] [--tasks M] [--repeat K]`.
Reports per-call times for the pure numpy kernel and, when built, the
compiled kernel, and verifies both produce identical pick sequences.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import backend


def synthetic_instance(n_users: int, n_tasks: int, mean_cover: float, seed: int):
    rng = np.random.default_rng(seed)
    indptr = np.zeros(n_users + 1, dtype=np.int64)
    chunks = []
    for row in range(n_users):
        k = min(n_tasks, rng.poisson(mean_cover))
        seg = np.sort(rng.choice(n_tasks, size=k, replace=False)).astype(np.int32)
        chunks.append(seg)
        indptr[row + 1] = indptr[row] + k
    tasks = np.concatenate(chunks) if chunks else np.zeros(0, dtype=np.int32)
    bids = rng.integers(1_000_000, 10_000_001, size=n_users, dtype=np.int64)
    return indptr, tasks, bids


def time_backend(name: str, indptr, tasks, bids, n_tasks: int, repeat: int):
    rows = np.arange(indptr.shape[0] - 1, dtype=np.int64)
    best = float("inf")
    picks = gains = None
    for _ in range(repeat):
        covered = np.zeros(n_tasks, dtype=np.uint8)
        start = time.perf_counter()
        picks, gains = backend.greedy_sequence(
            indptr, tasks, bids, rows, covered, backend.NO_STOP, force=name
        )
        best = min(best, time.perf_counter() - start)
    return best, picks, gains


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, nargs="+", default=[100, 400, 800, 1600])
    parser.add_argument("--tasks", type=int, default=3000)
    parser.add_argument("--mean-cover", type=float, default=4.0)
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    have_compiled = backend._fastpath is not None
    print(f"default backend: {backend.BACKEND}")
    header = f"{'users':>7} {'picks':>7} {'pure (ms)':>10}"
    if have_compiled:
        header += f" {'compiled (ms)':>14} {'speedup':>8}"
    print(header)
    for n in args.users:
        indptr, tasks, bids = synthetic_instance(n, args.tasks, args.mean_cover, args.seed)
        t_pure, picks_p, gains_p = time_backend(
            "pure", indptr, tasks, bids, args.tasks, args.repeat
        )
        line = f"{n:>7} {picks_p.size:>7} {t_pure * 1e3:>10.2f}"
        if have_compiled:
            t_fast, picks_f, gains_f = time_backend(
                "compiled", indptr, tasks, bids, args.tasks, args.repeat
            )
            if picks_f.tolist() != picks_p.tolist() or gains_f.tolist() != gains_p.tolist():
                print("BACKEND MISMATCH at", n)
                return 1
            line += f" {t_fast * 1e3:>14.2f} {t_pure / t_fast:>8.1f}x"
        print(line)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
