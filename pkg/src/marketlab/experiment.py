"""Experiment construction, estimators, and replication summaries.

build_experiment_market turns a limiting MarketSpec plus a DesignSpec
into a concrete FiniteMarket on the extended type space: CR splits each
customer type into a control and a treated subtype, LR splits each
listing type.  Group sizes use deterministic floor rounding, which
keeps M1/M -> a as the market grows while removing allocation noise
from the replication summaries.

run_replications drives seeded realizations (concurrently; results are
written into a replication-indexed array, so the summary is independent
of scheduling) and aggregates them into bias/SD/MSE against either the
analytic GTE limit or a Monte Carlo global-treatment-minus-control
reference.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .designs import DesignKind, DesignSpec
from .market_sim import BookingTally, FiniteMarket, run_realization
from .meanfield import MarketSpec, gte_limit

__all__ = [
    "RunSummary",
    "derive_seed",
    "build_experiment_market",
    "estimate",
    "replication_estimates",
    "run_replications",
]

_ENV_THREADS = "MARKETLAB_THREADS"

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


def derive_seed(master_seed: int, index: int, stream: int = 0) -> int:
    """Stateless per-replication seed: splitmix64 of (master, index, stream).

    The mixer is the splitmix64 finalizer, fixed forever for
    reproducibility.  `stream` separates auxiliary runs (e.g. the Monte
    Carlo GTE reference) from the main replication sequence.
    """
    z = (master_seed + (index + 1) * _SPLITMIX_GAMMA + stream * 0x94D049BB133111EB) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _thread_count() -> int:
    raw = os.environ.get(_ENV_THREADS, "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return min(4, os.cpu_count() or 1)


def _partition(n: int, weights: np.ndarray) -> np.ndarray:
    """Split n units across types proportionally to weights (sum exactly n).

    Floor of the proportional share, remainder assigned by largest
    fractional part; ties broken by type order for determinism.
    """
    shares = n * weights / weights.sum()
    counts = np.floor(shares).astype(np.int64)
    remainder = n - int(counts.sum())
    if remainder > 0:
        order = np.lexsort((np.arange(len(weights)), -(shares - counts)))
        counts[order[:remainder]] += 1
    return counts


@dataclass(frozen=True)
class RunSummary:
    """Aggregate of one replicated experiment.

    mse uses the per-experiment convention bias^2 + sd^2 (the error a
    single experiment would make), not the variance of the replication
    mean; scaled_variance is n_listings * sd^2.
    """

    replications: int
    estimator_mean: float
    estimator_sd: float
    gte_reference: float
    bias: float
    relative_bias: float | None
    mse: float
    scaled_variance: float


def build_experiment_market(spec: MarketSpec, design: DesignSpec, n: int) -> FiniteMarket:
    """Concrete market with n listings and floor(lambda * n) customers."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    m = int(math.floor(spec.demand_ratio * n))
    if m < 1:
        raise ValueError(f"lambda * n = {spec.demand_ratio * n:g} yields no customers")
    listing_counts = _partition(n, spec.tau)
    customer_counts = _partition(m, spec.sigma)

    phi_c, phi_t = spec.phi_control, spec.phi_treatment
    kind = design.kind

    if kind is DesignKind.GLOBAL_CONTROL or kind is DesignKind.GLOBAL_TREATMENT:
        phi = phi_c if kind is DesignKind.GLOBAL_CONTROL else phi_t
        treated = kind is DesignKind.GLOBAL_TREATMENT
        return FiniteMarket(
            n_listings=n,
            listing_counts=listing_counts,
            customer_counts=customer_counts,
            consider_prob=np.minimum(phi / n, 1.0),
            listing_treated=np.full(len(listing_counts), treated),
            customer_treated=np.full(len(customer_counts), treated),
        )

    a = design.allocation
    if kind is DesignKind.CR:
        # split customers: extended order (g ctrl, g treat) per base type
        counts, treated, rows = [], [], []
        for g, s in enumerate(customer_counts):
            s1 = int(math.floor(a * s))
            s0 = int(s) - s1
            if s0 == 0 or s1 == 0:
                raise ValueError(
                    f"allocation {a} leaves an empty group for customer type "
                    f"{spec.customer_types[g]!r} at n={n} (type count {int(s)})"
                )
            counts += [s0, s1]
            treated += [False, True]
            rows += [phi_c[g], phi_t[g]]
        return FiniteMarket(
            n_listings=n,
            listing_counts=listing_counts,
            customer_counts=np.array(counts),
            consider_prob=np.minimum(np.array(rows) / n, 1.0),
            listing_treated=np.zeros(len(listing_counts), dtype=bool),
            customer_treated=np.array(treated),
        )

    if kind is DesignKind.LR:
        counts, treated, cols = [], [], []
        for t, c in enumerate(listing_counts):
            c1 = int(math.floor(a * c))
            c0 = int(c) - c1
            if c0 == 0 or c1 == 0:
                raise ValueError(
                    f"allocation {a} leaves an empty group for listing type "
                    f"{spec.listing_types[t]!r} at n={n} (type count {int(c)})"
                )
            counts += [c0, c1]
            treated += [False, True]
            cols += [phi_c[:, t], phi_t[:, t]]
        return FiniteMarket(
            n_listings=n,
            listing_counts=np.array(counts),
            customer_counts=customer_counts,
            consider_prob=np.minimum(np.column_stack(cols) / n, 1.0),
            listing_treated=np.array(treated),
            customer_treated=np.zeros(len(customer_counts), dtype=bool),
        )

    raise ValueError(f"unsupported design kind {kind!r}")


def estimate(tally: BookingTally, design: DesignSpec, market: FiniteMarket) -> float:
    """Difference-in-means estimate for one realization.

    CR: (M/N) * (Q1/M1 - Q0/M0) over customer-side bookings; the M/N
    factor converts the per-customer difference to the per-listing
    booking scale of the GTE.  LR: Q1/N1 - Q0/N0 over listing-side
    bookings.  Global designs report the booking fraction Q/N.
    """
    kind = design.kind
    if kind in (DesignKind.GLOBAL_CONTROL, DesignKind.GLOBAL_TREATMENT):
        return tally.total_bookings / market.n_listings
    if kind is DesignKind.CR:
        treated = market.customer_treated
        m1 = int(market.customer_counts[treated].sum())
        m0 = int(market.customer_counts[~treated].sum())
        if m1 == 0 or m0 == 0:
            raise ValueError("CR estimate requires non-empty treatment and control groups")
        q1 = int(tally.bookings_by_customer_type[treated].sum())
        q0 = int(tally.bookings_by_customer_type[~treated].sum())
        m = m1 + m0
        return (m / market.n_listings) * (q1 / m1 - q0 / m0)
    if kind is DesignKind.LR:
        treated = market.listing_treated
        n1 = int(market.listing_counts[treated].sum())
        n0 = int(market.listing_counts[~treated].sum())
        if n1 == 0 or n0 == 0:
            raise ValueError("LR estimate requires non-empty treatment and control groups")
        q1 = int(tally.bookings_by_listing_type[treated].sum())
        q0 = int(tally.bookings_by_listing_type[~treated].sum())
        return q1 / n1 - q0 / n0
    raise ValueError(f"unsupported design kind {kind!r}")


def _estimates_for_indices(
    market: FiniteMarket,
    design: DesignSpec,
    master_seed: int,
    indices: range,
    stream: int,
    threads: int | None,
) -> np.ndarray:
    out = np.empty(len(indices), dtype=np.float64)

    def one(pos_index):
        pos, index = pos_index
        tally = run_realization(market, derive_seed(master_seed, index, stream))
        out[pos] = estimate(tally, design, market)

    workers = threads if threads is not None else _thread_count()
    if workers > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, enumerate(indices)))
    else:
        for item in enumerate(indices):
            one(item)
    return out


def replication_estimates(
    spec: MarketSpec,
    design: DesignSpec,
    n: int,
    replications: int,
    master_seed: int,
    start: int = 0,
    threads: int | None = None,
) -> np.ndarray:
    """Per-replication estimates for replication indices start..start+replications-1.

    Seeds depend only on (master_seed, index), so splitting a long run
    into consecutive chunks reproduces the single-run values exactly.
    """
    market = build_experiment_market(spec, design, n)
    return _estimates_for_indices(
        market, design, master_seed, range(start, start + replications), stream=0, threads=threads
    )


def run_replications(
    spec: MarketSpec,
    design: DesignSpec,
    n: int,
    replications: int,
    master_seed: int,
    gte_reference: str = "analytic",
    reference_replications: int | None = None,
    threads: int | None = None,
) -> RunSummary:
    """Replicate an experiment and summarize bias, SD, and MSE.

    gte_reference="analytic" compares against the mean-field GTE limit
    (finite-n GTE differs by O(1/n)); "montecarlo" runs paired
    global-treatment and global-control replications on dedicated seed
    streams and uses their mean difference.
    """
    if replications < 2:
        raise ValueError("replications must be >= 2 to estimate a standard deviation")
    estimates = replication_estimates(
        spec, design, n, replications, master_seed, threads=threads
    )

    if gte_reference == "analytic":
        reference = gte_limit(spec)
    elif gte_reference == "montecarlo":
        reps = reference_replications or replications
        gt_market = build_experiment_market(spec, DesignSpec.global_treatment(), n)
        gc_market = build_experiment_market(spec, DesignSpec.global_control(), n)
        gt = _estimates_for_indices(
            gt_market, DesignSpec.global_treatment(), master_seed, range(reps), 1, threads
        )
        gc = _estimates_for_indices(
            gc_market, DesignSpec.global_control(), master_seed, range(reps), 2, threads
        )
        reference = float(math.fsum(gt) / reps - math.fsum(gc) / reps)
    else:
        raise ValueError(f"gte_reference must be 'analytic' or 'montecarlo', got {gte_reference!r}")

    mean = math.fsum(estimates) / replications
    var = math.fsum((e - mean) ** 2 for e in estimates) / (replications - 1)
    sd = math.sqrt(var)
    bias = mean - reference
    return RunSummary(
        replications=replications,
        estimator_mean=mean,
        estimator_sd=sd,
        gte_reference=reference,
        bias=bias,
        relative_bias=bias / reference if reference != 0.0 else None,
        mse=bias**2 + var,
        scaled_variance=n * var,
    )
