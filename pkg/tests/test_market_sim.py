"""Sampler tests: determinism, backend agreement, tiny-market exactness,
and convergence of empirical booking rates to the mean-field limit."""

import math

import numpy as np
import pytest

import marketlab as ml
from marketlab.market_sim import available_backends

from conftest import PHI


def make_market(listing_counts, customer_counts, prob, listing_treated=None, customer_treated=None):
    listing_counts = np.asarray(listing_counts)
    customer_counts = np.asarray(customer_counts)
    return ml.FiniteMarket(
        n_listings=int(listing_counts.sum()),
        listing_counts=listing_counts,
        customer_counts=customer_counts,
        consider_prob=np.asarray(prob, dtype=float),
        listing_treated=np.zeros(len(listing_counts), bool) if listing_treated is None else np.asarray(listing_treated),
        customer_treated=np.zeros(len(customer_counts), bool) if customer_treated is None else np.asarray(customer_treated),
    )


# ---------------------------------------------------------------------------
# validation and matching invariants
# ---------------------------------------------------------------------------


def test_market_validation():
    with pytest.raises(ValueError):
        make_market([5], [3], [[1.2]])  # p > 1
    with pytest.raises(ValueError):
        ml.FiniteMarket(
            n_listings=9,  # counts sum to 10
            listing_counts=np.array([4, 6]),
            customer_counts=np.array([3]),
            consider_prob=np.array([[0.1, 0.1]]),
            listing_treated=np.array([False, True]),
            customer_treated=np.array([False]),
        )
    with pytest.raises(ValueError):
        make_market([5], [3], [[0.1, 0.2]])  # shape mismatch


def test_tally_is_a_matching():
    market = make_market([40, 60], [30, 50], [[0.05, 0.02], [0.01, 0.04]])
    for seed in range(20):
        tally = ml.run_realization(market, seed)
        assert tally.total_bookings == tally.bookings_by_listing_type.sum()
        assert tally.total_bookings == tally.bookings_by_customer_type.sum()
        assert tally.total_bookings <= min(market.n_listings, market.n_customers)
        assert np.all(tally.bookings_by_listing_type <= market.listing_counts)
        assert np.all(tally.bookings_by_customer_type <= market.customer_counts)


def test_zero_probability_market():
    market = make_market([10], [10], [[0.0]])
    tally = ml.run_realization(market, 3)
    assert tally.total_bookings == 0


# ---------------------------------------------------------------------------
# determinism and backend agreement
# ---------------------------------------------------------------------------


def test_determinism_same_seed():
    market = make_market([100], [80], [[0.02]])
    a = ml.run_realization(market, 12345)
    b = ml.run_realization(market, 12345)
    assert np.array_equal(a.bookings_by_listing_type, b.bookings_by_listing_type)
    assert np.array_equal(a.bookings_by_customer_type, b.bookings_by_customer_type)
    c = ml.run_realization(market, 12346)
    different = not np.array_equal(
        a.bookings_by_customer_type, c.bookings_by_customer_type
    ) or not np.array_equal(a.bookings_by_listing_type, c.bookings_by_listing_type)
    assert different  # astronomically unlikely to collide


@pytest.mark.skipif(len(available_backends()) < 2, reason="compiled kernel not built")
def test_backends_bit_identical():
    markets = [
        make_market([1], [1], [[0.3]]),
        make_market([3], [2], [[0.4]]),
        make_market([20, 30], [40, 25], [[0.02, 0.05], [0.01, 0.0]],
                    listing_treated=[False, True]),
        make_market([500], [250, 250], [[PHI / 500], [0.3 / 500]],
                    customer_treated=[False, True]),
    ]
    for market in markets:
        for seed in (0, 1, 7, 2**40 + 9):
            k = ml.run_realization(market, seed, backend="kernel")
            n = ml.run_realization(market, seed, backend="numpy")
            assert np.array_equal(k.bookings_by_listing_type, n.bookings_by_listing_type)
            assert np.array_equal(k.bookings_by_customer_type, n.bookings_by_customer_type)


def test_run_many_matches_run_realization():
    market = make_market([50, 50], [60], [[0.01, 0.03]])
    seeds = [11, 22, 33]
    bl, bc = ml.run_many(market, seeds)
    for i, seed in enumerate(seeds):
        tally = ml.run_realization(market, seed)
        assert np.array_equal(bl[i], tally.bookings_by_listing_type)
        assert np.array_equal(bc[i], tally.bookings_by_customer_type)


def test_split_steps_compose_to_run_realization():
    # applying the two public steps with one generator reproduces the
    # fused realization (numpy backend defines the stream contract)
    market = make_market([30, 20], [25, 15], [[0.05, 0.01], [0.02, 0.08]])
    rng = np.random.Generator(np.random.PCG64(99))
    apps = ml.sample_consideration_and_apply(market, rng)
    tally = ml.accept_applications(apps, rng)
    fused = ml.run_realization(market, 99, backend="numpy")
    assert np.array_equal(tally.bookings_by_listing_type, fused.bookings_by_listing_type)
    assert np.array_equal(tally.bookings_by_customer_type, fused.bookings_by_customer_type)


# ---------------------------------------------------------------------------
# sampled application step against closed forms
# ---------------------------------------------------------------------------


def test_single_pair_application_probability():
    # N=1, M=1, p=0.3: the application (and booking) occurs w.p. 0.3
    market = make_market([1], [1], [[0.3]])
    bl, _ = ml.run_many(market, range(20000))
    rate = bl.sum() / 20000
    assert rate == pytest.approx(0.3, abs=4 * math.sqrt(0.3 * 0.7 / 20000))


def test_two_listings_split_applications():
    # N=2, M=1, p=0.3 each: apply w.p. 1 - 0.49 = 0.51, split evenly
    market = make_market([1, 1], [1], [[0.3, 0.3]])
    reps = 40000
    bl, _ = ml.run_many(market, range(reps))
    total = bl.sum() / reps
    assert total == pytest.approx(0.51, abs=4 * math.sqrt(0.51 * 0.49 / reps))
    each = bl.mean(axis=0)
    assert each[0] == pytest.approx(0.255, abs=4 * math.sqrt(0.255 * 0.745 / reps))


def test_acceptance_proportional_to_counts():
    # one listing, p=1 for both customers: each books w.p. 1/2
    market = make_market([1], [1, 1], [[1.0], [1.0]], customer_treated=[False, True])
    reps = 20000
    _, bc = ml.run_many(market, range(reps))
    assert bc.sum() == reps  # always exactly one booking
    assert bc[:, 1].mean() == pytest.approx(0.5, abs=4 * math.sqrt(0.25 / reps))


def test_contested_listing_expected_bookings():
    # N=1, M=2, p=0.3: E[bookings] = 1 - 0.7^2 = 0.51
    market = make_market([1], [2], [[0.3]])
    reps = 40000
    bl, _ = ml.run_many(market, range(reps))
    assert bl.mean() == pytest.approx(0.51, abs=4 * math.sqrt(0.51 * 0.49 / reps))


# ---------------------------------------------------------------------------
# convergence to the mean-field limit
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_booking_rate_converges_to_limit():
    spec_limit = ml.limit_booking_rate(ml.MarketSpec.homogeneous(PHI, PHI, 1.0))
    reps = 100
    gaps = []
    for n in (10**3, 10**4, 10**5):
        market = make_market([n], [n], [[PHI / n]])
        bl, _ = ml.run_many(market, list(range(reps)))
        rates = bl[:, 0] / n
        gap = abs(rates.mean() - spec_limit)
        se = rates.std(ddof=1) / math.sqrt(reps)
        assert gap < 3 * se, f"n={n}: gap {gap:.2e} vs 3se {3*se:.2e}"
        gaps.append(gap)
    assert gaps[2] < gaps[0], f"no shrink across sizes: {gaps}"


@pytest.mark.slow
def test_supply_constrained_market_books_out():
    # many customers per listing: essentially every listing gets booked
    n, m = 2000, 200000
    market = make_market([n], [m], [[0.4 / n]])
    bl, _ = ml.run_many(market, range(5))
    psi = -math.expm1(-0.4)
    expected = -math.expm1(-(m / n) * psi)  # ~= 1
    assert bl[:, 0].mean() / n == pytest.approx(expected, abs=0.01)
    assert expected > 0.99
