"""Compare the compiled kernels against the pure-Python reference.

Both backends run the same randomized workloads sized like real usage: the
window sweep over a near vehicle's 2D box during placement, and the yawed
rectangle intersection at evaluation-time matching volume.

    python3 benchmarks/bench_kernels.py [--repeats N] [--seed S]
"""

import argparse
import time
from statistics import median

import numpy as np

from badfusion.kernels import _reference

try:
    from badfusion.kernels import _fast
except ImportError:
    _fast = None


def sweep_workloads(rng, n_cases):
    """Placement-sized sweeps: a few hundred points, a car-sized 2D box."""
    cases = []
    for _ in range(n_cases):
        n = int(rng.integers(150, 500))
        left = float(rng.uniform(0, 1000))
        top = float(rng.uniform(0, 250))
        u = rng.uniform(left, left + 120, n)
        v = rng.uniform(top, top + 90, n)
        cases.append((
            u, v,
            int(left), int(left) + 105,
            int(top), int(top) + 75,
            1, 15, 15,
        ))
    return cases


def iou_workloads(rng, n_cases):
    cases = []
    for _ in range(n_cases):
        a = (rng.uniform(-2, 2), rng.uniform(6, 30),
             rng.uniform(1.4, 1.9), rng.uniform(3.0, 4.6),
             rng.uniform(-np.pi, np.pi))
        b = (a[0] + rng.uniform(-2, 2), a[1] + rng.uniform(-2, 2),
             rng.uniform(1.4, 1.9), rng.uniform(3.0, 4.6),
             rng.uniform(-np.pi, np.pi))
        cases.append(a + b)
    return cases


def run(fn, cases, repeats):
    """Best-of-repeats wall time for one pass over all cases, in seconds."""
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        for case in cases:
            fn(*case)
        times.append(time.perf_counter() - start)
    return median(times)


def verify(name, cases, tol=0.0):
    for case in cases:
        ref = _reference.__dict__[name](*case)
        fast = _fast.__dict__[name](*case)
        if tol:
            assert abs(ref - fast) <= tol, (name, case)
        else:
            assert ref == fast, (name, case)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--sweeps", type=int, default=200,
                        help="number of densest_window workloads")
    parser.add_argument("--pairs", type=int, default=20000,
                        help="number of rect_intersection_area workloads")
    args = parser.parse_args()

    if _fast is None:
        raise SystemExit("compiled backend not built; run pip install -e . first")

    rng = np.random.default_rng(args.seed)
    benchmarks = [
        ("densest_window", sweep_workloads(rng, args.sweeps), 0.0),
        ("rect_intersection_area", iou_workloads(rng, args.pairs), 1e-9),
    ]

    print(f"{'kernel':<24} {'calls':>7} {'python':>10} {'compiled':>10} {'speedup':>8}")
    for name, cases, tol in benchmarks:
        verify(name, cases, tol)
        t_ref = run(_reference.__dict__[name], cases, args.repeats)
        t_fast = run(_fast.__dict__[name], cases, args.repeats)
        print(f"{name:<24} {len(cases):>7} {t_ref:>9.3f}s {t_fast:>9.3f}s "
              f"{t_ref / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
