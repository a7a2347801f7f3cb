#!/usr/bin/env python3
"""Benchmark the compiled stepper against the numpy fallback.

Runs representative stepping workloads on both backends, checks that the
trajectories agree, and prints a timing table.
"""

import argparse
import time

import numpy as np

from chaoskit import backend

WORKLOADS = [
    ("ou_linear n=256 x1000", "run_pairwise", (256, 1), 1000,
     ("ou_linear", 1.0, 1.0)),
    ("ou_linear n=1024 x1000", "run_pairwise", (1024, 1), 1000,
     ("ou_linear", 1.0, 1.0)),
    ("bounded_tanh n=128 x200", "run_pairwise", (128, 1), 200,
     ("bounded_tanh", 1.0, 1.0)),
    ("lingrowth_sign n=128 x200", "run_pairwise", (128, 1), 200,
     ("lingrowth_sign", 1.0, 0.5)),
    ("rank_indicator n=256 x500", "run_pairwise", (256, 1), 500,
     ("rank_indicator", 0.0, 1.0)),
    ("series tanh n=128 x200", "run_power_series", (128, 1), 200,
     ("bounded_tanh", 0.5, np.array([0.5, 0.25, 0.125]))),
]


def run_workload(mod, fn_name, x0, noise, dt, args):
    traj = np.empty((noise.shape[0] + 1,) + x0.shape)
    traj[0] = x0
    if fn_name == "run_pairwise":
        kind, conf, rate = args
        status = mod.run_pairwise(traj, noise, dt, kind, conf, rate)
    else:
        base, conf, coefs = args
        status = mod.run_power_series(traj, noise, dt, base, conf,
                                      np.ascontiguousarray(coefs))
    assert status == -1
    return traj


def best_time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    try:
        fast = backend.get_backend("cython")
    except ImportError:
        raise SystemExit("compiled stepper not built; install with "
                         "'pip install -e . --no-build-isolation'")
    slow = backend.get_backend("python")
    rng = np.random.default_rng(1)
    dt = 1e-3

    header = f"{'workload':<28}{'python':>12}{'cython':>12}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for name, fn_name, shape, steps, wargs in WORKLOADS:
        x0 = rng.normal(size=shape)
        noise = rng.normal(size=(steps,) + shape)
        ref = run_workload(slow, fn_name, x0, noise, dt, wargs)
        out = run_workload(fast, fn_name, x0, noise, dt, wargs)
        if not np.allclose(ref, out, rtol=1e-9, atol=1e-12):
            raise SystemExit(f"backend mismatch on {name}")
        t_py = best_time(lambda: run_workload(slow, fn_name, x0, noise, dt, wargs),
                         args.repeats)
        t_cy = best_time(lambda: run_workload(fast, fn_name, x0, noise, dt, wargs),
                         args.repeats)
        print(f"{name:<28}{t_py * 1e3:>10.1f}ms{t_cy * 1e3:>10.1f}ms"
              f"{t_py / t_cy:>9.1f}x")


if __name__ == "__main__":
    main()
