"""Enumeration-oracle tests: closed forms, symmetries, and Monte Carlo
agreement on a battery of tiny markets."""

import math

import numpy as np
import pytest

import marketlab as ml
from marketlab.designs import DesignKind
from marketlab.experiment import derive_seed
from marketlab.oracle import TinyMarket, exact_expectations


def tiny(prob, customer_treated=None, listing_treated=None):
    prob = np.asarray(prob, dtype=float)
    m, n = prob.shape
    return TinyMarket(
        consider_prob=prob,
        customer_treated=np.zeros(m, bool) if customer_treated is None else np.asarray(customer_treated),
        listing_treated=np.zeros(n, bool) if listing_treated is None else np.asarray(listing_treated),
    )


def test_budget_enforced():
    with pytest.raises(ValueError, match="budget"):
        tiny(np.full((4, 4), 0.1))


def test_single_pair():
    res = exact_expectations(tiny([[0.3]]))
    assert res.expected_bookings == pytest.approx(0.3, abs=1e-14)
    assert res.probability_mass == pytest.approx(1.0, abs=1e-12)
    assert res.estimator_mean == pytest.approx(0.3, abs=1e-14)


def test_two_customers_one_listing():
    # E[Q] = 1 - (1 - p)^2 at p = 0.3
    res = exact_expectations(tiny([[0.3], [0.3]]))
    assert res.expected_bookings == pytest.approx(0.51, abs=1e-14)


def test_one_customer_two_listings_split():
    res = exact_expectations(tiny([[0.3, 0.3]]))
    assert res.expected_bookings == pytest.approx(0.51, abs=1e-14)
    assert res.expected_treated_listing_bookings == 0.0
    res = exact_expectations(tiny([[0.3, 0.3]], listing_treated=[False, True]))
    assert res.expected_treated_listing_bookings == pytest.approx(0.255, abs=1e-14)
    assert res.expected_control_listing_bookings == pytest.approx(0.255, abs=1e-14)


def test_probability_mass_and_permutation_symmetry():
    rng = np.random.default_rng(5)
    prob = rng.uniform(0, 1, size=(3, 4))
    base = exact_expectations(tiny(prob))
    assert base.probability_mass == pytest.approx(1.0, abs=1e-12)
    for perm_rng in range(3):
        perm = np.random.default_rng(perm_rng).permutation(4)
        shuffled = exact_expectations(tiny(prob[:, perm]))
        assert shuffled.expected_bookings == pytest.approx(base.expected_bookings, abs=1e-12)
        cperm = np.random.default_rng(perm_rng).permutation(3)
        shuffled_c = exact_expectations(tiny(prob[cperm, :]))
        assert shuffled_c.expected_bookings == pytest.approx(base.expected_bookings, abs=1e-12)


def test_group_estimator_requires_both_groups():
    with pytest.raises(ValueError):
        exact_expectations(tiny([[0.3], [0.3]]), DesignKind.CR)
    with pytest.raises(ValueError):
        exact_expectations(tiny([[0.3, 0.3]]), DesignKind.LR)


def test_cr_estimator_moments_enumerated_independently():
    # brute-force re-derivation for M=2 (one treated), N=1: outcomes are
    # (apply?, apply?) x acceptance choice
    p0, p1 = 0.4, 0.6
    market = tiny([[p0], [p1]], customer_treated=[False, True])
    res = exact_expectations(market, DesignKind.CR)
    # estimator = (M/N)(Q1/1 - Q0/1) = 2(Q1 - Q0)
    cases = {
        (0, 0): (1 - p0) * (1 - p1),
        (1, 0): p0 * (1 - p1),
        (0, 1): (1 - p0) * p1,
        (1, 1): p0 * p1,
    }
    mean = 0.0
    second = 0.0
    for (a0, a1), w in cases.items():
        if a0 and a1:  # both applied: listing accepts one uniformly
            for est in (2 * (1 - 0), 2 * (0 - 1)):
                mean += w * 0.5 * est
                second += w * 0.5 * est**2
        elif a1:
            mean += w * 2
            second += w * 4
        elif a0:
            mean += w * -2
            second += w * 4
    assert res.estimator_mean == pytest.approx(mean, abs=1e-14)
    assert res.estimator_variance == pytest.approx(second - mean**2, abs=1e-13)


def test_montecarlo_agreement_small_battery():
    # quick version of the acceptance battery: three tiny markets,
    # 20000 seeds, 4 standard errors
    rng = np.random.default_rng(123)
    reps = 20000
    battery = [
        (tiny([[0.3], [0.5]], customer_treated=[False, True]), DesignKind.CR),
        (tiny([[0.2, 0.7]], listing_treated=[False, True]), DesignKind.LR),
        (tiny(rng.uniform(0.1, 0.9, (2, 3)), customer_treated=[False, True]), DesignKind.CR),
    ]
    for k, (market, kind) in enumerate(battery):
        res = exact_expectations(market, kind)
        m, n = market.consider_prob.shape
        fm = ml.FiniteMarket(
            n_listings=n,
            listing_counts=np.ones(n, dtype=np.int64),
            customer_counts=np.ones(m, dtype=np.int64),
            consider_prob=market.consider_prob,
            listing_treated=market.listing_treated,
            customer_treated=market.customer_treated,
        )
        seeds = [derive_seed(900 + k, i) for i in range(reps)]
        bl, bc = ml.run_many(fm, seeds)
        q = bl.sum(axis=1)
        se = q.std(ddof=1) / math.sqrt(reps)
        assert abs(q.mean() - res.expected_bookings) < 4 * se
        q1l = bl[:, market.listing_treated].sum(axis=1)
        se1 = q1l.std(ddof=1) / math.sqrt(reps)
        assert abs(q1l.mean() - res.expected_treated_listing_bookings) < max(4 * se1, 1e-9)
