#!/usr/bin/env python3
"""Benchmark the compiled sampling kernel against the numpy backend.

Runs matched realizations on both backends across market sizes and
shapes, checks the tallies are bit-identical, and reports per-realization
timings plus the batch path on a tiny market.

Usage: python benchmarks/benchmark_backends.py [--reps R]
"""

import argparse
import time

import numpy as np

from marketlab import FiniteMarket, available_backends, run_many, run_realization

PHI, PHI_T = 0.25249969640914605, 0.2856326530118375


def cr_market(n: int) -> FiniteMarket:
    return FiniteMarket(
        n_listings=n,
        listing_counts=np.array([n]),
        customer_counts=np.array([n // 2, n - n // 2]),
        consider_prob=np.array([[PHI / n], [PHI_T / n]]),
        listing_treated=np.array([False]),
        customer_treated=np.array([False, True]),
    )


def lr_market(n: int) -> FiniteMarket:
    return FiniteMarket(
        n_listings=n,
        listing_counts=np.array([n - n // 2, n // 2]),
        customer_counts=np.array([n]),
        consider_prob=np.array([[PHI / n, PHI_T / n]]),
        listing_treated=np.array([False, True]),
        customer_treated=np.array([False]),
    )


def time_backend(market, backend, reps):
    run_realization(market, 0, backend=backend)  # warm up
    t0 = time.perf_counter()
    for seed in range(reps):
        run_realization(market, seed, backend=backend)
    return (time.perf_counter() - t0) / reps


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--reps", type=int, default=10)
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "kernel" not in backends:
        print("compiled kernel not built; nothing to compare")
        return

    print(f"\n{'market':>14} {'n':>10} {'kernel':>12} {'numpy':>12} {'speedup':>8}  identical")
    for label, factory in (("CR 50/50", cr_market), ("LR 50/50", lr_market)):
        for n in (10**4, 10**5, 10**6):
            market = factory(n)
            t_kernel = time_backend(market, "kernel", args.reps)
            t_numpy = time_backend(market, "numpy", max(3, args.reps // 3))
            a = run_realization(market, 12345, backend="kernel")
            b = run_realization(market, 12345, backend="numpy")
            same = np.array_equal(
                a.bookings_by_listing_type, b.bookings_by_listing_type
            ) and np.array_equal(a.bookings_by_customer_type, b.bookings_by_customer_type)
            print(
                f"{label:>14} {n:>10,} {t_kernel*1e3:>10.1f}ms {t_numpy*1e3:>10.1f}ms "
                f"{t_numpy/t_kernel:>7.1f}x  {same}"
            )

    # batch path on a tiny market: per-call overhead dominates here
    tiny = FiniteMarket.untyped(3, 4, 0.25)
    seeds = np.arange(100_000, dtype=np.uint64)
    print(f"\n{'tiny batch':>14} {'seeds':>10} {'kernel':>12} {'numpy':>12}")
    t0 = time.perf_counter()
    run_many(tiny, seeds, backend="kernel")
    t_kernel = time.perf_counter() - t0
    t0 = time.perf_counter()
    run_many(tiny, seeds[:2000], backend="numpy")
    t_numpy = (time.perf_counter() - t0) * (len(seeds) / 2000)
    print(f"{'3x4, p=0.25':>14} {len(seeds):>10,} {t_kernel:>10.2f}s {t_numpy:>10.2f}s (extrapolated)")


if __name__ == "__main__":
    main()
