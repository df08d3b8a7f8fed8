"""Brute-force evaluator for tiny markets.

Computes exact expectations (and estimator variance) of the booking
process by exhaustive enumeration, for markets small enough that
M * N <= 12.  Used as the independent ground truth that the Monte Carlo
sampler is checked against: the oracle works directly on per-pair
consideration probabilities and never touches the count-based sampling
path.

The enumeration factors by independence.  Each customer's application
target distribution is computed by summing over all 2^N of its
consideration sets (q[l] = sum over sets containing l of P(set)/|set|);
applications are independent across customers, so the joint assignment
space is the product of per-customer targets.  Within one assignment,
each listing independently accepts one applicant uniformly at random;
group tallies are exact sums over those per-listing acceptance choices,
and the estimator's conditional mean and variance follow because the
estimator is affine in the number of treated-customer bookings.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .designs import DesignKind

__all__ = ["TinyMarket", "OracleResult", "exact_expectations", "ENUMERATION_BUDGET"]

ENUMERATION_BUDGET = 12


@dataclass(frozen=True)
class TinyMarket:
    """Explicit per-pair market: consider_prob[c, l] for customer c, listing l."""

    consider_prob: np.ndarray
    customer_treated: np.ndarray
    listing_treated: np.ndarray

    def __post_init__(self):
        prob = np.array(self.consider_prob, dtype=np.float64)
        ct = np.array(self.customer_treated, dtype=bool)
        lt = np.array(self.listing_treated, dtype=bool)
        if prob.ndim != 2:
            raise ValueError("consider_prob must be a 2-D (customers x listings) matrix")
        m, n = prob.shape
        if m * n > ENUMERATION_BUDGET:
            raise ValueError(
                f"enumeration budget exceeded: M*N = {m * n} > {ENUMERATION_BUDGET}"
            )
        if np.any(prob < 0) or np.any(prob > 1):
            raise ValueError("consideration probabilities must lie in [0, 1]")
        if ct.shape != (m,) or lt.shape != (n,):
            raise ValueError("treatment labels must match the matrix dimensions")
        for name, arr in (("consider_prob", prob), ("customer_treated", ct), ("listing_treated", lt)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def n_customers(self) -> int:
        return self.consider_prob.shape[0]

    @property
    def n_listings(self) -> int:
        return self.consider_prob.shape[1]


@dataclass(frozen=True)
class OracleResult:
    probability_mass: float        # total enumerated weight; 1 up to rounding
    expected_bookings: float
    expected_control_customer_bookings: float
    expected_treated_customer_bookings: float
    expected_control_listing_bookings: float
    expected_treated_listing_bookings: float
    estimator_mean: float
    estimator_variance: float


def _target_distribution(p_row: np.ndarray) -> np.ndarray:
    """P(customer applies to listing l), plus the no-application mass last.

    Sums P(consideration set) / |set| over all subsets containing l.
    """
    n = len(p_row)
    q = np.zeros(n + 1, dtype=np.float64)
    for mask in range(1 << n):
        w = 1.0
        members = []
        for l in range(n):
            if mask >> l & 1:
                w *= p_row[l]
                members.append(l)
            else:
                w *= 1.0 - p_row[l]
        if w == 0.0:
            continue
        if not members:
            q[n] += w
        else:
            share = w / len(members)
            for l in members:
                q[l] += share
    return q


def exact_expectations(market: TinyMarket, kind: DesignKind = DesignKind.GLOBAL_CONTROL) -> OracleResult:
    """Exact booking expectations and estimator moments for a tiny market.

    kind selects the estimator whose mean/variance are reported; the
    booking expectations themselves do not depend on it.
    """
    m, n = market.n_customers, market.n_listings
    ct = market.customer_treated
    lt = market.listing_treated

    m1 = int(ct.sum())
    m0 = m - m1
    n1 = int(lt.sum())
    n0 = n - n1
    if kind is DesignKind.CR and (m1 == 0 or m0 == 0):
        raise ValueError("CR estimator needs both treated and control customers")
    if kind is DesignKind.LR and (n1 == 0 or n0 == 0):
        raise ValueError("LR estimator needs both treated and control listings")

    targets = [_target_distribution(market.consider_prob[c]) for c in range(m)]

    w_acc = []
    q_acc = []
    q1c_acc = []
    q1l_acc = []
    est_acc = []
    est2_acc = []

    if kind is DesignKind.CR:
        # estimator is affine in Q1c (treated-customer bookings): alpha*Q1c + beta(Q)
        alpha = (m / n) * (1.0 / m1 + 1.0 / m0)

    for assignment in product(*(range(n + 1) for _ in range(m))):
        w = 1.0
        for c, target in enumerate(assignment):
            w *= targets[c][target]
        if w == 0.0:
            continue
        load = [0] * n          # applications per listing
        load_t = [0] * n        # from treated customers
        for c, target in enumerate(assignment):
            if target < n:
                load[target] += 1
                if ct[c]:
                    load_t[target] += 1
        booked = [1 if k > 0 else 0 for k in load]
        q = sum(booked)
        # acceptance: listing l books a treated customer w.p. load_t/load,
        # independently across listings
        pi = [load_t[l] / load[l] if load[l] else 0.0 for l in range(n)]
        mu1 = math.fsum(pi)                       # E[treated-customer bookings]
        var1 = math.fsum(p * (1.0 - p) for p in pi)
        q1l = sum(b for b, t in zip(booked, lt) if t)

        w_acc.append(w)
        q_acc.append(w * q)
        q1c_acc.append(w * mu1)
        q1l_acc.append(w * q1l)

        if kind in (DesignKind.GLOBAL_CONTROL, DesignKind.GLOBAL_TREATMENT):
            est = q / n
            est2 = est * est
        elif kind is DesignKind.LR:
            est = q1l / n1 - (q - q1l) / n0
            est2 = est * est
        else:  # CR
            beta = -(m / n) * (q / m0)
            e_mean = alpha * mu1 + beta
            est = e_mean
            est2 = alpha * alpha * (var1 + mu1 * mu1) + 2.0 * alpha * beta * mu1 + beta * beta
        est_acc.append(w * est)
        est2_acc.append(w * est2)

    mass = math.fsum(w_acc)
    e_q = math.fsum(q_acc)
    e_q1c = math.fsum(q1c_acc)
    e_q1l = math.fsum(q1l_acc)
    e_est = math.fsum(est_acc)
    e_est2 = math.fsum(est2_acc)
    return OracleResult(
        probability_mass=mass,
        expected_bookings=e_q,
        expected_control_customer_bookings=e_q - e_q1c,
        expected_treated_customer_bookings=e_q1c,
        expected_control_listing_bookings=e_q - e_q1l,
        expected_treated_listing_bookings=e_q1l,
        estimator_mean=e_est,
        estimator_variance=max(e_est2 - e_est * e_est, 0.0),
    )
