"""Exact finite-market sampler for the three-step booking process.

A realization runs consideration, application, and acceptance for a
concrete market and produces booking tallies per extended type.  The
sampler is count-based: instead of a Bernoulli coin per
customer-listing pair, each customer draws one Binomial consideration
count per listing type and then picks a uniform listing index within
the chosen type.  Within-type exchangeability of listings makes this
exactly equivalent to the pairwise process while costing
O(M * n_listing_types) instead of O(M * N), which is what makes
N = 10^7 markets feasible.

Two interchangeable backends exist: a compiled kernel (built from
_sim_kernel.pyx) and a vectorized numpy fallback.  They replay the same
draw schedule from the same PCG64 stream, so tallies are bit-identical
across backends; selection happens at import time (kernel when present)
and can be forced with MARKETLAB_BACKEND=numpy|kernel.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _sim_numpy

try:
    from . import _sim_kernel
except ImportError:
    _sim_kernel = None

__all__ = [
    "FiniteMarket",
    "BookingTally",
    "active_backend",
    "available_backends",
    "sample_consideration_and_apply",
    "accept_applications",
    "run_realization",
    "run_many",
]

_ENV_BACKEND = "MARKETLAB_BACKEND"


def available_backends() -> tuple[str, ...]:
    return ("kernel", "numpy") if _sim_kernel is not None else ("numpy",)


def active_backend() -> str:
    """Backend used by run_realization / run_many."""
    forced = os.environ.get(_ENV_BACKEND, "").strip().lower()
    if forced == "numpy":
        return "numpy"
    if forced == "kernel":
        if _sim_kernel is None:
            raise RuntimeError(f"{_ENV_BACKEND}=kernel but the compiled kernel is not installed")
        return "kernel"
    if forced:
        raise RuntimeError(f"unknown {_ENV_BACKEND} value {forced!r} (use 'kernel' or 'numpy')")
    return "kernel" if _sim_kernel is not None else "numpy"


@dataclass(frozen=True)
class FiniteMarket:
    """A concrete market instance over extended (experiment-split) types.

    consider_prob[g, t] is the probability that one customer of extended
    type g includes one particular listing of extended type t in its
    consideration set.  The treated flags record which extended types
    carry the intervention; they are all-False outside experiments.
    """

    n_listings: int
    listing_counts: np.ndarray
    customer_counts: np.ndarray
    consider_prob: np.ndarray
    listing_treated: np.ndarray
    customer_treated: np.ndarray

    def __post_init__(self):
        counts_l = np.array(self.listing_counts, dtype=np.int64)
        counts_c = np.array(self.customer_counts, dtype=np.int64)
        prob = np.array(self.consider_prob, dtype=np.float64)
        lt = np.array(self.listing_treated, dtype=bool)
        ct = np.array(self.customer_treated, dtype=bool)
        if np.any(counts_l < 0) or np.any(counts_c < 0):
            raise ValueError("type counts must be >= 0")
        if counts_l.sum() != self.n_listings:
            raise ValueError(
                f"listing counts sum to {counts_l.sum()}, expected n_listings={self.n_listings}"
            )
        if prob.shape != (len(counts_c), len(counts_l)):
            raise ValueError(
                f"consider_prob has shape {prob.shape}, expected "
                f"({len(counts_c)}, {len(counts_l)})"
            )
        if np.any(prob < 0) or np.any(prob > 1) or not np.all(np.isfinite(prob)):
            raise ValueError("consider_prob entries must lie in [0, 1]")
        if lt.shape != counts_l.shape or ct.shape != counts_c.shape:
            raise ValueError("treated flags must match the type counts in shape")
        for name, arr in (
            ("listing_counts", counts_l),
            ("customer_counts", counts_c),
            ("consider_prob", prob),
            ("listing_treated", lt),
            ("customer_treated", ct),
        ):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def untyped(cls, n_listings: int, n_customers: int, consider_prob: float) -> "FiniteMarket":
        """Homogeneous market with a single pair probability."""
        return cls(
            n_listings=n_listings,
            listing_counts=np.array([n_listings]),
            customer_counts=np.array([n_customers]),
            consider_prob=np.array([[consider_prob]]),
            listing_treated=np.array([False]),
            customer_treated=np.array([False]),
        )

    @property
    def n_customers(self) -> int:
        return int(self.customer_counts.sum())


@dataclass(frozen=True)
class BookingTally:
    """Bookings per extended type from one realization.

    A booking credits both the listing's type (a listing got booked)
    and the accepted customer's type, so both breakdowns sum to the
    total.
    """

    bookings_by_listing_type: np.ndarray
    bookings_by_customer_type: np.ndarray
    total_bookings: int


def _tally(market: FiniteMarket, by_ltype: np.ndarray, by_ctype: np.ndarray) -> BookingTally:
    total_l = int(by_ltype.sum())
    total_c = int(by_ctype.sum())
    # matching validity: each listing books at most once by construction, so the
    # two breakdowns must agree and cannot exceed either side of the market
    assert total_l == total_c, "listing- and customer-side tallies disagree"
    assert total_l <= min(market.n_listings, market.n_customers)
    by_ltype = by_ltype.copy()
    by_ctype = by_ctype.copy()
    by_ltype.flags.writeable = False
    by_ctype.flags.writeable = False
    return BookingTally(
        bookings_by_listing_type=by_ltype,
        bookings_by_customer_type=by_ctype,
        total_bookings=total_l,
    )


def sample_consideration_and_apply(market: FiniteMarket, rng: np.random.Generator):
    """Consideration + application step (numpy path).

    Returns one (n_customer_types, type_count) application-count array
    per listing type: the tally keyed by (listing type, listing index).
    """
    return _sim_numpy.sample_consideration_and_apply(market, rng)


def accept_applications(applications, rng: np.random.Generator) -> BookingTally:
    """Acceptance step over an application tally (numpy path)."""
    by_ltype, by_ctype = _sim_numpy.accept_applications(applications, rng)
    n_listings = int(sum(a.shape[1] for a in applications))
    total = int(by_ltype.sum())
    assert total == int(by_ctype.sum()), "listing- and customer-side tallies disagree"
    assert total <= n_listings
    by_ltype.flags.writeable = False
    by_ctype.flags.writeable = False
    return BookingTally(by_ltype, by_ctype, total)


def run_realization(market: FiniteMarket, seed: int, backend: str | None = None) -> BookingTally:
    """One deterministic realization of the booking process."""
    backend = backend or active_backend()
    if backend == "kernel":
        bl, bc = _sim_kernel.run_one(
            market.listing_counts, market.customer_counts, market.consider_prob, seed
        )
    else:
        bl, bc = _sim_numpy.run_realization_arrays(market, seed)
    return _tally(market, bl, bc)


def run_many(market: FiniteMarket, seeds, backend: str | None = None):
    """Realizations for every seed; returns stacked count arrays.

    Output: (by_listing_type, by_customer_type) with shapes
    (n_seeds, n_listing_types) and (n_seeds, n_customer_types).
    Prefer this over a run_realization loop for small markets: the
    kernel amortizes per-call overhead across the whole batch.
    """
    seeds = np.asarray(seeds, dtype=np.uint64)
    backend = backend or active_backend()
    if backend == "kernel":
        return _sim_kernel.run_many(
            market.listing_counts, market.customer_counts, market.consider_prob, seeds
        )
    n_l, n_c = len(market.listing_counts), len(market.customer_counts)
    out_bl = np.empty((len(seeds), n_l), dtype=np.int64)
    out_bc = np.empty((len(seeds), n_c), dtype=np.int64)
    for i, seed in enumerate(seeds):
        bl, bc = _sim_numpy.run_realization_arrays(market, int(seed))
        out_bl[i] = bl
        out_bc[i] = bc
    return out_bl, out_bc
