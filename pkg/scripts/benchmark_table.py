#!/usr/bin/env python3
"""Convergence table for the manufactured-solution benchmark.

Runs the coupled benchmark over a range of refinement levels and prints
per-species errors with experimental convergence orders in both the
L2(H1) and Linf(L2) norms.
"""

import argparse
import time

from tsfem.benchmark import BENCHMARK_SPECIES, eoc_report, run_benchmark


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--first", type=int, default=1, help="coarsest level")
    parser.add_argument("--last", type=int, default=4, help="finest level")
    parser.add_argument("--tau0", type=float, default=0.0625,
                        help="step size at level 0 (quartered per level)")
    args = parser.parse_args()
    if args.last < args.first + 1:
        parser.error("need at least two levels for convergence orders")

    records = []
    for level in range(args.first, args.last + 1):
        started = time.perf_counter()
        records.append(run_benchmark(level, tau0=args.tau0))
        print(f"level {level}: h = {records[-1].mesh_size:.4e}, "
              f"tau = {records[-1].tau:.4e}, "
              f"{time.perf_counter() - started:.1f}s")

    report = eoc_report(records)
    for name in BENCHMARK_SPECIES:
        print(f"\n{name}")
        print(f"{'level':>5} {'L2(H1)':>12} {'eoc':>6} {'Linf(L2)':>12} {'eoc':>6}")
        for i, rec in enumerate(records):
            eoc1 = f"{report[name]['l2h1'][i - 1]:>6.2f}" if i else f"{'-':>6}"
            eoc2 = f"{report[name]['linfl2'][i - 1]:>6.2f}" if i else f"{'-':>6}"
            print(f"{rec.level:>5} {rec.l2h1[name]:>12.4e} {eoc1} "
                  f"{rec.linfl2[name]:>12.4e} {eoc2}")


if __name__ == "__main__":
    main()
