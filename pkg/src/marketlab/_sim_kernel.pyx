# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled booking-process sampler.

Replays the numpy backend's canonical draw schedule (see _sim_numpy.py)
against the same PCG64 stream, so a given (market, seed) yields
identical tallies on either backend.  The win over the vectorized
backend is fused passes over per-call scratch buffers instead of a
chain of array temporaries.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.stdint cimport int64_t
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    binomial_t,
    random_binomial,
    random_standard_uniform,
)

from numpy.random import PCG64

cnp.import_array()


cdef int _realize(bitgen_t *rng,
                  int64_t[::1] t_counts,
                  int64_t[::1] s_counts,
                  double[:, ::1] prob,
                  int64_t[::1] offsets,
                  int64_t[:, ::1] cbuf,
                  double[::1] ubuf,
                  int64_t[::1] apps,
                  int64_t[::1] out_bl,
                  int64_t[::1] out_bc) noexcept nogil:
    cdef Py_ssize_t n_ltypes = t_counts.shape[0]
    cdef Py_ssize_t n_ctypes = s_counts.shape[0]
    cdef Py_ssize_t g, t, i, j, k
    cdef int64_t s, total, load, base
    cdef double u, target, cum
    cdef binomial_t binom
    binom.has_binomial = 0

    for k in range(apps.shape[0]):
        apps[k] = 0
    for t in range(n_ltypes):
        out_bl[t] = 0
    for g in range(n_ctypes):
        out_bc[g] = 0

    # application phase, one customer group at a time
    for g in range(n_ctypes):
        s = s_counts[g]
        if s == 0:
            continue
        for i in range(s):
            for t in range(n_ltypes):
                cbuf[i, t] = random_binomial(rng, prob[g, t], t_counts[t], &binom)
        for i in range(s):
            ubuf[i] = random_standard_uniform(rng)
        for i in range(s):
            u = random_standard_uniform(rng)      # listing index within type
            total = 0
            for t in range(n_ltypes):
                total += cbuf[i, t]
            if total == 0:
                continue
            target = ubuf[i] * total
            cum = 0.0
            for t in range(n_ltypes):
                cum += cbuf[i, t]
                if target < cum:
                    break
            j = <int64_t>(u * t_counts[t])
            apps[(offsets[t] + j) * n_ctypes + g] += 1

    # acceptance phase, one listing group at a time
    for t in range(n_ltypes):
        for j in range(t_counts[t]):
            u = random_standard_uniform(rng)
            base = (offsets[t] + j) * n_ctypes
            load = 0
            for g in range(n_ctypes):
                load += apps[base + g]
            if load == 0:
                continue
            out_bl[t] += 1
            target = u * load
            cum = 0.0
            for g in range(n_ctypes):
                cum += apps[base + g]
                if target < cum:
                    break
            out_bc[g] += 1
    return 0


cdef bitgen_t *_acquire(object bit_generator) except NULL:
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")


def run_many(listing_counts, customer_counts, consider_prob, seeds):
    """Run one realization per seed; returns (by_listing_type, by_customer_type).

    Output shapes (n_seeds, n_listing_types) and (n_seeds, n_customer_types).
    """
    # plain copies: the caller's arrays may be read-only views
    cdef int64_t[::1] t_counts = np.array(listing_counts, dtype=np.int64)
    cdef int64_t[::1] s_counts = np.array(customer_counts, dtype=np.int64)
    cdef double[:, ::1] prob = np.array(consider_prob, dtype=np.float64, order="C")
    seeds_arr = np.ascontiguousarray(seeds, dtype=np.uint64)

    cdef Py_ssize_t n_ltypes = t_counts.shape[0]
    cdef Py_ssize_t n_ctypes = s_counts.shape[0]
    if prob.shape[0] != n_ctypes or prob.shape[1] != n_ltypes:
        raise ValueError("consider_prob shape does not match the type counts")

    offsets_arr = np.zeros(n_ltypes, dtype=np.int64)
    np.cumsum(np.asarray(t_counts)[:-1], out=offsets_arr[1:])
    cdef int64_t[::1] offsets = offsets_arr
    cdef int64_t n_listings = int(np.asarray(t_counts).sum())
    cdef int64_t max_s = int(np.asarray(s_counts).max()) if n_ctypes else 0

    cdef int64_t[:, ::1] cbuf = np.empty((max(max_s, 1), n_ltypes), dtype=np.int64)
    cdef double[::1] ubuf = np.empty(max(max_s, 1), dtype=np.float64)
    cdef int64_t[::1] apps = np.empty(max(n_listings, 1) * n_ctypes, dtype=np.int64)

    cdef Py_ssize_t n_seeds = seeds_arr.shape[0]
    out_bl_arr = np.empty((n_seeds, n_ltypes), dtype=np.int64)
    out_bc_arr = np.empty((n_seeds, n_ctypes), dtype=np.int64)
    cdef int64_t[:, ::1] out_bl = out_bl_arr
    cdef int64_t[:, ::1] out_bc = out_bc_arr

    cdef Py_ssize_t r
    cdef bitgen_t *rng
    for r in range(n_seeds):
        bg = PCG64(int(seeds_arr[r]))
        rng = _acquire(bg)
        with nogil:
            _realize(rng, t_counts, s_counts, prob, offsets,
                     cbuf, ubuf, apps, out_bl[r], out_bc[r])
    return out_bl_arr, out_bc_arr


def run_one(listing_counts, customer_counts, consider_prob, seed):
    """Single realization; returns (by_listing_type, by_customer_type)."""
    bl, bc = run_many(listing_counts, customer_counts, consider_prob,
                      np.array([seed], dtype=np.uint64))
    return bl[0], bc[0]
