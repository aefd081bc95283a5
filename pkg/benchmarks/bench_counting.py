#!/usr/bin/env python3
"""Benchmark the compiled counting kernel against the pure-numpy fallback.

Times the repeated-evaluation path (the hot loop of the bootstrap and
null simulations) and the one-shot statistic over a grid of problem
sizes, then prints a table with the speedup.

Usage: python benchmarks/bench_counting.py [--quick]
"""

import argparse
import time

import numpy as np

from macgof import counting
from macgof.mac import MacConfig, RepeatedMac, mac, select_locations
from macgof.sample import PairedSample


def _setup(n, k, seed=0):
    rng = np.random.default_rng(seed)
    xs = rng.normal(size=(n, 1))
    sample = PairedSample(xs, rng.normal(size=n))
    other = PairedSample(xs, rng.normal(size=n))
    locs = select_locations(sample, other, MacConfig(k=k), rng)
    ys = [rng.normal(size=n) for _ in range(64)]
    return sample, other, locs, ys


def _time_repeated(backend, sample, locs, ys, repeats):
    counting._active = backend  # noqa: SLF001 - deliberate swap for benchmarking
    scorer = RepeatedMac(sample, locs)
    scorer.evaluate(ys[0])  # warm up
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        for y in ys:
            scorer.evaluate(y)
        best = min(best, (time.perf_counter() - start) / len(ys))
    return best


def _time_oneshot(backend, sample, other, locs, repeats):
    counting._active = backend
    mac(sample, other, locs)
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        mac(sample, other, locs)
        best = min(best, time.perf_counter() - start)
    return best


def run(quick=False):
    if counting.compiled_backend is None:
        raise SystemExit("compiled extension not built; nothing to compare")
    sizes = [(100, 50), (200, 100)] if quick else [(100, 50), (200, 100), (400, 100), (800, 200)]
    repeats = 3 if quick else 5

    print(f"{'n':>5} {'k':>5} {'path':<10} {'python':>12} {'compiled':>12} {'speedup':>9}")
    original = counting._active
    try:
        for n, k in sizes:
            sample, other, locs, ys = _setup(n, k)
            t_py = _time_repeated(counting.python_backend, sample, locs, ys, repeats)
            t_c = _time_repeated(counting.compiled_backend, sample, locs, ys, repeats)
            print(f"{n:>5} {k:>5} {'repeated':<10} {t_py * 1e6:>10.0f}us {t_c * 1e6:>10.0f}us "
                  f"{t_py / t_c:>8.1f}x")
            t_py = _time_oneshot(counting.python_backend, sample, other, locs, repeats)
            t_c = _time_oneshot(counting.compiled_backend, sample, other, locs, repeats)
            print(f"{n:>5} {k:>5} {'one-shot':<10} {t_py * 1e6:>10.0f}us {t_c * 1e6:>10.0f}us "
                  f"{t_py / t_c:>8.1f}x")
    finally:
        counting._active = original

    # sanity: both backends agree bit-for-bit on a fresh instance
    sample, other, locs, ys = _setup(150, 60, seed=99)
    counting._active = counting.python_backend
    ref = RepeatedMac(sample, locs).evaluate(ys[0])
    counting._active = counting.compiled_backend
    got = RepeatedMac(sample, locs).evaluate(ys[0])
    counting._active = original
    assert ref == got, "backends disagree"
    print(f"\nbackend agreement check: {ref!r} == {got!r}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller grid, fewer repeats")
    run(parser.parse_args().quick)
