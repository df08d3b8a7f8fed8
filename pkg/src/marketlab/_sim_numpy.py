"""Vectorized numpy backend for the booking-process sampler.

This module fixes the canonical random-draw schedule; the compiled
kernel replays exactly the same schedule against the same PCG64 stream,
so both backends produce identical tallies for a given (market, seed).

Per realization, for each customer type g in order:
  1. an (s_g, n_listing_types) matrix of per-type consideration counts,
     Binomial(t_count, p[g, t]) drawn row-major,
  2. s_g uniforms deciding which considered type the application goes to,
  3. s_g uniforms picking the listing index within that type
     (floor(u * t_count); the 2^-53 quantization is far below any
     statistical tolerance used here);
then for each listing type t in order:
  4. t_count uniforms, one per listing, picking the accepted customer
     type in proportion to that listing's per-type application counts.

Customers with an empty consideration set exit; their uniforms from
steps 2-3 are drawn and discarded so the schedule stays aligned.
"""

from __future__ import annotations

import numpy as np


def sample_consideration_and_apply(market, rng: np.random.Generator) -> list[np.ndarray]:
    """One application round: list of (n_customer_types, t_count) count arrays."""
    t_counts = market.listing_counts
    n_ltypes = len(t_counts)
    n_ctypes = len(market.customer_counts)
    apps = [np.zeros((n_ctypes, int(t)), dtype=np.int64) for t in t_counts]
    for g in range(n_ctypes):
        s = int(market.customer_counts[g])
        if s == 0:
            continue
        considered = rng.binomial(t_counts, market.consider_prob[g], size=(s, n_ltypes))
        total = considered.sum(axis=1)
        u_type = rng.random(s)
        u_idx = rng.random(s)
        applying = total > 0
        if not applying.any():
            continue
        # type choice proportional to per-type consideration counts
        target = u_type[applying] * total[applying]
        cum = np.cumsum(considered[applying], axis=1)
        chosen_type = (cum <= target[:, None]).sum(axis=1)
        index = (u_idx[applying] * t_counts[chosen_type]).astype(np.int64)
        for t in range(n_ltypes):
            mask = chosen_type == t
            if mask.any():
                apps[t][g] += np.bincount(index[mask], minlength=int(t_counts[t]))
    return apps


def accept_applications(apps: list[np.ndarray], rng: np.random.Generator):
    """Each listing with applicants books one, uniformly at random.

    Uniformity over individual applicants is implemented as a
    categorical draw over customer types weighted by application counts.
    Returns (bookings_by_listing_type, bookings_by_customer_type).
    """
    n_ltypes = len(apps)
    n_ctypes = apps[0].shape[0] if apps else 0
    by_ltype = np.zeros(n_ltypes, dtype=np.int64)
    by_ctype = np.zeros(n_ctypes, dtype=np.int64)
    for t, counts in enumerate(apps):
        n_t = counts.shape[1]
        if n_t == 0:
            continue
        load = counts.sum(axis=0)
        u = rng.random(n_t)
        booked = load > 0
        by_ltype[t] = int(booked.sum())
        target = u * load
        cum = np.cumsum(counts, axis=0)
        accepted_type = (cum <= target[None, :]).sum(axis=0)
        by_ctype += np.bincount(accepted_type[booked], minlength=n_ctypes)
    return by_ltype, by_ctype


def run_realization_arrays(market, seed: int):
    """One full realization; returns (by_listing_type, by_customer_type)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    apps = sample_consideration_and_apply(market, rng)
    return accept_applications(apps, rng)
