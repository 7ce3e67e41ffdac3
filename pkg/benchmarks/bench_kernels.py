#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot paths (RK4 bicycle stepping and the oriented-box
separating-axis gap) plus a composite no-action rollout, and verifies en
passant that both backends agree bit for bit on the benchmark workload.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import math
import random
import time

from crashbench import _kernels_py as pykern

try:
    from crashbench import _kernels as ckern
except ImportError:
    ckern = None


def bench(fn, args_list, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        for args in args_list:
            fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bicycle_workload(n: int):
    rng = random.Random(1)
    return [
        (
            rng.uniform(-50, 50),
            rng.uniform(-50, 50),
            rng.uniform(-math.pi, math.pi),
            rng.uniform(0, 20),
            rng.uniform(-0.5, 0.5),
            rng.uniform(-7, 3),
            0.01,
            1,
            2.588,
            30.0,
        )
        for _ in range(n)
    ]


def obb_workload(n: int):
    rng = random.Random(2)
    return [
        tuple(
            rng.uniform(lo, hi)
            for lo, hi in (
                (-10, 10), (-10, 10), (-math.pi, math.pi), (0.5, 3), (0.5, 2),
                (-10, 10), (-10, 10), (-math.pi, math.pi), (0.5, 3), (0.5, 2),
            )
        )
        for _ in range(n)
    ]


def rollout(kern, n_steps: int) -> tuple:
    """Composite workload: constant-control rollout with a collision check
    per step against one moving target, like the scenario constructor."""
    x, y, h, v = 0.0, 0.0, 0.0, 10.0
    tx, ty = 60.0, 0.5
    state = (x, y, h, v)
    hit_t = -1.0
    for i in range(n_steps):
        state = kern.bicycle_step(*state, 0.0, 0.0, 0.01, 1, 2.588, 30.0)
        t = (i + 1) * 0.01
        gap = kern.obb_max_gap(state[0], state[1], state[2], 2.042, 0.865,
                               tx - 5.0 * t, ty, math.pi, 2.042, 0.865)
        if gap <= 0.0 and hit_t < 0.0:
            hit_t = t
    return state, hit_t


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("-n", type=int, default=50_000, help="calls per kernel")
    args = parser.parse_args()

    if ckern is None:
        print("compiled backend unavailable; only timing the pure-Python fallback")
    backends = [("python", pykern)] + ([("compiled", ckern)] if ckern else [])

    bike = bicycle_workload(args.n)
    obb = obb_workload(args.n)

    if ckern is not None:
        for a in bike[:1000]:
            assert ckern.bicycle_step(*a) == pykern.bicycle_step(*a)
        for a in obb[:1000]:
            assert ckern.obb_max_gap(*a) == pykern.obb_max_gap(*a)
        assert rollout(ckern, 2000) == rollout(pykern, 2000)
        print("bit-exact parity on the benchmark workload: ok\n")

    results: dict[tuple[str, str], float] = {}
    for name, kern in backends:
        results[(name, "bicycle_step")] = bench(kern.bicycle_step, bike, args.repeats)
        results[(name, "obb_max_gap")] = bench(kern.obb_max_gap, obb, args.repeats)
        t0 = time.perf_counter()
        for _ in range(args.repeats):
            rollout(kern, 20_000)
        results[(name, "rollout")] = (time.perf_counter() - t0) / args.repeats

    print(f"{'kernel':<14} {'backend':<9} {'time':>9}  {'per call':>10}  speedup")
    for kernel, calls in (("bicycle_step", args.n), ("obb_max_gap", args.n), ("rollout", 20_000)):
        base = results.get(("python", kernel))
        for name, _ in backends:
            t = results[(name, kernel)]
            speedup = f"{base / t:5.1f}x" if name == "compiled" else "  1.0x"
            print(f"{kernel:<14} {name:<9} {t * 1e3:8.2f}ms  {t / calls * 1e9:8.1f}ns  {speedup}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
