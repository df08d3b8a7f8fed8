"""Large-market analytics for two-sided booking markets.

Everything in this module is a deterministic function of a market
description in the scaling limit where listings and customers grow
proportionally (customers per listing held at the relative demand
``lambda``).  Consideration is parameterized by rates: a customer of
type g includes one particular listing of type t in its consideration
set with probability ``phi[g, t] / n_listings``, so ``phi`` stays O(1)
as the market grows.

The chain of derived quantities:

* application rates  psi[g, t] = phi[g, t] * F(tau . phi[g, :])
* booking rates      omega[g, t] = psi[g, t] * F(lambda * sigma . psi[:, t])
* per-listing booking fraction   lambda * sigma' omega tau

where ``F(x) = (1 - exp(-x)) / x`` is the probability that one arrival
in a Poisson(x) batch is the one served by a unit-capacity server.  The
same F governs how an experiment's treatment/control mixing dilutes the
groups' conversion rates, which is where interference bias comes from:
the limits of the CR and LR difference-in-means estimators computed
here do not generally equal the limit of the global treatment effect.

Scaled estimator variances (N times the estimator's sampling variance)
are available in closed form for homogeneous markets; heterogeneous
variance has no closed form here and is estimated by Monte Carlo in the
experiment module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .designs import DesignKind, DesignSpec

__all__ = [
    "MarketSpec",
    "RateMatrices",
    "BiasReport",
    "LrVarianceLimit",
    "CrVarianceLimit",
    "ALLOCATION_GRID",
    "f_poisson_serve",
    "application_rates",
    "booking_rates",
    "rate_matrices",
    "limit_booking_rate",
    "gte_limit",
    "cr_estimator_limit",
    "lr_estimator_limit",
    "asymptotic_bias",
    "bias_differential_bound",
    "find_lambda_star",
    "lr_variance_limit",
    "cr_variance_limit",
    "variance_approx_ratio",
    "calibrate_phi",
]

MASS_TOL = 1e-12

# Uniform allocation grid used wherever an optimum over the treatment
# allocation is taken (variance ratios, recommenders).
ALLOCATION_GRID = np.round(np.arange(1, 100) * 0.01, 2)


# --------------------------------------------------------------------------
# Market description
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketSpec:
    """Limiting description of a two-sided market and an intervention.

    sigma and tau are the customer/listing type mass distributions (each
    sums to 1), demand_ratio is customers per listing, and the two phi
    matrices hold consideration rates without (control) and with
    (treatment) the intervention.
    """

    customer_types: tuple[str, ...]
    listing_types: tuple[str, ...]
    sigma: np.ndarray
    tau: np.ndarray
    demand_ratio: float
    phi_control: np.ndarray
    phi_treatment: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "customer_types", tuple(self.customer_types))
        object.__setattr__(self, "listing_types", tuple(self.listing_types))
        for name in ("sigma", "tau", "phi_control", "phi_treatment"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        g, t = len(self.customer_types), len(self.listing_types)
        if self.sigma.shape != (g,):
            raise ValueError(f"sigma has shape {self.sigma.shape}, expected ({g},)")
        if self.tau.shape != (t,):
            raise ValueError(f"tau has shape {self.tau.shape}, expected ({t},)")
        for name in ("phi_control", "phi_treatment"):
            m = getattr(self, name)
            if m.shape != (g, t):
                raise ValueError(f"{name} has shape {m.shape}, expected ({g}, {t})")
            if not np.all(np.isfinite(m)) or np.any(m < 0):
                raise ValueError(f"{name} entries must be finite and >= 0")
        for name in ("sigma", "tau"):
            v = getattr(self, name)
            if np.any(v <= 0) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} masses must be positive and finite")
            if abs(v.sum() - 1.0) > MASS_TOL:
                raise ValueError(f"{name} must sum to 1 (got {v.sum()!r})")
        lam = self.demand_ratio
        if not (isinstance(lam, (int, float)) and math.isfinite(lam) and lam > 0):
            raise ValueError(f"demand_ratio must be a positive finite number, got {lam!r}")
        object.__setattr__(self, "demand_ratio", float(lam))

    @classmethod
    def homogeneous(cls, phi: float, phi_tilde: float, demand_ratio: float) -> "MarketSpec":
        """Single customer type, single listing type."""
        return cls(
            customer_types=("c",),
            listing_types=("l",),
            sigma=np.array([1.0]),
            tau=np.array([1.0]),
            demand_ratio=demand_ratio,
            phi_control=np.array([[phi]], dtype=np.float64),
            phi_treatment=np.array([[phi_tilde]], dtype=np.float64),
        )

    @classmethod
    def from_masses(
        cls,
        sigma: Sequence[float],
        tau: Sequence[float],
        demand_ratio: float,
        phi_control: Iterable[Iterable[float]],
        phi_treatment: Iterable[Iterable[float]],
        customer_types: Sequence[str] | None = None,
        listing_types: Sequence[str] | None = None,
    ) -> "MarketSpec":
        sigma = np.asarray(sigma, dtype=np.float64)
        tau = np.asarray(tau, dtype=np.float64)
        if customer_types is None:
            customer_types = tuple(f"c{i}" for i in range(len(sigma)))
        if listing_types is None:
            listing_types = tuple(f"l{i}" for i in range(len(tau)))
        return cls(
            customer_types=tuple(customer_types),
            listing_types=tuple(listing_types),
            sigma=sigma,
            tau=tau,
            demand_ratio=demand_ratio,
            phi_control=np.asarray(phi_control, dtype=np.float64),
            phi_treatment=np.asarray(phi_treatment, dtype=np.float64),
        )

    def with_demand_ratio(self, demand_ratio: float) -> "MarketSpec":
        return MarketSpec(
            self.customer_types, self.listing_types, self.sigma, self.tau,
            demand_ratio, self.phi_control, self.phi_treatment,
        )

    def with_multiplicative_lift(self, alpha: float) -> "MarketSpec":
        """Replace the treatment matrix with alpha * phi_control."""
        if not (math.isfinite(alpha) and alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {alpha!r}")
        return MarketSpec(
            self.customer_types, self.listing_types, self.sigma, self.tau,
            self.demand_ratio, self.phi_control, alpha * self.phi_control,
        )

    @property
    def is_homogeneous(self) -> bool:
        return len(self.customer_types) == 1 and len(self.listing_types) == 1

    def phi(self, which: str) -> np.ndarray:
        if which == "control":
            return self.phi_control
        if which == "treatment":
            return self.phi_treatment
        raise ValueError(f"which must be 'control' or 'treatment', got {which!r}")


@dataclass(frozen=True)
class RateMatrices:
    """Derived limit rates: applications (psi) and bookings (omega)."""

    psi: np.ndarray
    omega: np.ndarray


@dataclass(frozen=True)
class BiasReport:
    """Asymptotic bias of a difference-in-means estimator versus the GTE.

    relative_bias is None when the GTE limit is exactly zero.
    """

    estimator_limit: float
    gte_limit: float
    bias: float
    relative_bias: float | None


class LrVarianceLimit(NamedTuple):
    total: float
    vt: float
    vc: float
    cv: float


class CrVarianceLimit(NamedTuple):
    total: float
    vt: float
    vc: float
    cvtt: float
    cvcc: float
    cvtc: float


# --------------------------------------------------------------------------
# The serving function F
# --------------------------------------------------------------------------

_F_TAYLOR_CUTOFF = 1e-6


def f_poisson_serve(x):
    """F(x) = (1 - exp(-x)) / x, extended by continuity to F(0) = 1.

    Strictly decreasing on [0, inf) with range (0, 1].  Evaluated with
    expm1 for x >= 1e-6 and the Taylor polynomial 1 - x/2 + x^2/6 below,
    which avoids cancellation when sweeps probe x ~ 1e-8.  Accepts
    scalars or arrays; negative or non-finite input raises ValueError.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"f_poisson_serve requires finite x >= 0, got {x!r}")
    small = arr < _F_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, arr)
    out = np.where(small, 1.0 - arr / 2.0 + arr * arr / 6.0, -np.expm1(-safe) / safe)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out


def _f_scalar(x: float) -> float:
    if x < _F_TAYLOR_CUTOFF:
        return 1.0 - x / 2.0 + x * x / 6.0
    return -math.expm1(-x) / x


# --------------------------------------------------------------------------
# Rate matrices and booking levels
# --------------------------------------------------------------------------


def application_rates(spec: MarketSpec, which: str = "control") -> np.ndarray:
    """psi[g, t] = phi[g, t] * F(tau . phi[g, :]).

    F(tau . phi[g, :]) is the consideration-to-application conversion
    probability for a type-g customer.  Rows whose consideration rates
    are all zero yield zero application rates (F(0) = 1 keeps the
    product finite, no NaN fix-up needed).
    """
    phi = spec.phi(which)
    row_intensity = phi @ spec.tau
    return phi * f_poisson_serve(row_intensity)[:, None]


def booking_rates(spec: MarketSpec, psi: np.ndarray) -> np.ndarray:
    """omega[g, t] = psi[g, t] * F(lambda * sigma . psi[:, t]).

    The second factor is the application-to-booking conversion
    probability for type-t listings.  psi must come from the same spec.
    """
    psi = np.asarray(psi, dtype=np.float64)
    g, t = len(spec.customer_types), len(spec.listing_types)
    if psi.shape != (g, t):
        raise ValueError(f"psi has shape {psi.shape}, expected ({g}, {t})")
    col_intensity = spec.demand_ratio * (spec.sigma @ psi)
    return psi * f_poisson_serve(col_intensity)[None, :]


def rate_matrices(spec: MarketSpec, which: str = "control") -> RateMatrices:
    psi = application_rates(spec, which)
    return RateMatrices(psi=psi, omega=booking_rates(spec, psi))


def limit_booking_rate(spec: MarketSpec, which: str = "control") -> float:
    """Limit of E[bookings] / n_listings:  lambda * sigma' omega tau."""
    omega = rate_matrices(spec, which).omega
    return float(spec.demand_ratio * (spec.sigma @ omega @ spec.tau))


def gte_limit(spec: MarketSpec) -> float:
    """Limit of the global treatment effect: treated minus control booking rate."""
    return limit_booking_rate(spec, "treatment") - limit_booking_rate(spec, "control")


# --------------------------------------------------------------------------
# Estimator expectation limits
# --------------------------------------------------------------------------


def _check_allocation(a: float, name: str) -> float:
    if not (isinstance(a, (int, float)) and math.isfinite(a) and 0.0 < a < 1.0):
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {a!r}")
    return float(a)


def cr_estimator_limit(spec: MarketSpec, a_c: float) -> float:
    """Limit of the customer-randomized difference-in-means estimator.

    Treated and control customers keep their own application rates, but
    every listing's acceptance pool mixes the two groups, so the
    application-to-booking conversion is evaluated at the blended
    intensity a_c * psi_treat + (1 - a_c) * psi_ctrl:

        lambda * sum_t tau[t] * sigma.(psi~ - psi)[:, t]
                 * F(lambda * sigma.(a_c psi~ + (1-a_c) psi)[:, t])
    """
    a_c = _check_allocation(a_c, "a_c")
    lam = spec.demand_ratio
    psi = application_rates(spec, "control")
    psi_t = application_rates(spec, "treatment")
    diff = spec.sigma @ (psi_t - psi)           # per listing type
    blend = spec.sigma @ (a_c * psi_t + (1.0 - a_c) * psi)
    return float(lam * np.sum(spec.tau * diff * f_poisson_serve(lam * blend)))


def lr_estimator_limit(spec: MarketSpec, a_l: float) -> float:
    """Limit of the listing-randomized difference-in-means estimator.

    Every customer's consideration set mixes treated and control
    listings, so consideration-to-application conversion happens at the
    blended row intensity tau.(a_l phi~ + (1-a_l) phi)[g, :].  Sign
    convention: control exponential minus treatment exponential, which
    is positive for upward interventions:

        sum_t tau[t] * ( exp(-lambda * sum_g sigma[g] phi[g,t]  F_mix[g])
                       - exp(-lambda * sum_g sigma[g] phi~[g,t] F_mix[g]) )
    """
    a_l = _check_allocation(a_l, "a_l")
    lam = spec.demand_ratio
    phi = spec.phi_control
    phi_t = spec.phi_treatment
    mix = a_l * phi_t + (1.0 - a_l) * phi
    f_mix = f_poisson_serve(mix @ spec.tau)     # per customer type
    ctrl = np.exp(-lam * ((spec.sigma * f_mix) @ phi))
    treat = np.exp(-lam * ((spec.sigma * f_mix) @ phi_t))
    return float(np.sum(spec.tau * (ctrl - treat)))


def asymptotic_bias(spec: MarketSpec, design: DesignSpec) -> BiasReport:
    """Estimator expectation limit minus the GTE limit, with relative bias."""
    if design.kind is DesignKind.CR:
        est = cr_estimator_limit(spec, design.allocation)
    elif design.kind is DesignKind.LR:
        est = lr_estimator_limit(spec, design.allocation)
    else:
        raise ValueError(f"asymptotic bias is defined for CR/LR designs, got {design.kind}")
    gte = gte_limit(spec)
    bias = est - gte
    rel = bias / gte if gte != 0.0 else None
    return BiasReport(estimator_limit=est, gte_limit=gte, bias=bias, relative_bias=rel)


def bias_differential_bound(spec: MarketSpec) -> float:
    """Bound on the spread of CR bias over all allocations:

        lambda^2 * (max over (g, t) of phi~[g,t] - phi[g,t])^2

    Holds for any intervention, multiplicative or not.
    """
    lift = float(np.max(spec.phi_treatment - spec.phi_control))
    return spec.demand_ratio**2 * lift**2


# --------------------------------------------------------------------------
# Homogeneous closed forms (scalars; also the reduction targets for the
# matrix code paths above)
# --------------------------------------------------------------------------


def _lr_limit_endpoint(phi: float, phi_t: float, lam: float, f_mix: float) -> float:
    return math.exp(-lam * phi * f_mix) - math.exp(-lam * phi_t * f_mix)


def find_lambda_star(phi: float, phi_t: float) -> float | None:
    """Relative-demand cutoff where the LR bias flips monotonicity in a_l.

    Located as the lambda where the two allocation-endpoint values of
    the LR estimator limit coincide (endpoints by continuity: F(phi) at
    a_l -> 0, F(phi_t) at a_l -> 1).  Below the cutoff the LR bias is
    monotone one way in the allocation, above it the other way.
    Bracketed on [1e-6, 1e4] and bisected to 1e-9; returns None when the
    endpoint difference does not change sign on the bracket.
    """
    if not (phi > 0 and phi_t > 0):
        raise ValueError("find_lambda_star requires phi > 0 and phi_t > 0")
    if phi == phi_t:
        raise ValueError("find_lambda_star is undefined for a null intervention")
    f0 = _f_scalar(phi)
    f1 = _f_scalar(phi_t)

    def gap(lam: float) -> float:
        return _lr_limit_endpoint(phi, phi_t, lam, f0) - _lr_limit_endpoint(phi, phi_t, lam, f1)

    lo, hi = 1e-6, 1e4
    glo, ghi = gap(lo), gap(hi)
    if glo == 0.0:
        return lo
    if (glo > 0) == (ghi > 0) and ghi != 0.0:
        return None
    while hi - lo > 1e-9:
        mid = 0.5 * (lo + hi)
        if (gap(mid) > 0) == (glo > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# Scaled variance limits (homogeneous markets)
# --------------------------------------------------------------------------


def _check_homog_params(phi: float, phi_t: float, lam: float, a: float, name: str):
    for v, label in ((phi, "phi"), (phi_t, "phi_t")):
        if not (math.isfinite(v) and v >= 0):
            raise ValueError(f"{label} must be finite and >= 0, got {v!r}")
    if not (math.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive and finite, got {lam!r}")
    _check_allocation(a, name)


def lr_variance_limit(phi: float, phi_t: float, lam: float, a_l: float) -> LrVarianceLimit:
    """Limit of N * Var of the LR estimator in a homogeneous market.

    With F_mix = F((1-a_l) phi + a_l phi_t), eT = exp(-lam phi_t F_mix)
    and eC = exp(-lam phi F_mix):

        VT = eT (1 - eT) / a_l              (treated-listing variances)
        VC = eC (1 - eC) / (1 - a_l)        (control-listing variances)
        CV = -lam F_mix^2 (phi_t eT - phi eC)^2   (all cross-listing covariances)

    CV follows from the exact pair expansion
    Cov(Y_l, Y_l') = (1 - q_l - q_l')^M - (1 - q_l)^M (1 - q_l')^M with
    N q -> phi F_mix, and is never positive: listings compete.
    """
    _check_homog_params(phi, phi_t, lam, a_l, "a_l")
    f_mix = _f_scalar((1.0 - a_l) * phi + a_l * phi_t)
    e_t = math.exp(-lam * phi_t * f_mix)
    e_c = math.exp(-lam * phi * f_mix)
    vt = e_t * (1.0 - e_t) / a_l
    vc = e_c * (1.0 - e_c) / (1.0 - a_l)
    cv = -lam * f_mix * f_mix * (phi_t * e_t - phi * e_c) ** 2
    return LrVarianceLimit(total=vt + vc + cv, vt=vt, vc=vc, cv=cv)


def cr_variance_limit(phi: float, phi_t: float, lam: float, a_c: float) -> CrVarianceLimit:
    """Limit of N * Var of the CR estimator in a homogeneous market.

    Five contributions, in terms of the application probabilities
    psi = 1 - e^-phi, psi~ = 1 - e^-phi_t, their blend
    psibar = (1-a_c) psi + a_c psi~, and rho = lam * psibar:

      VT, VC      per-listing variances of the accepted-treated /
                  accepted-control indicators,
      CVTT, CVCC  covariances of those indicators across distinct
                  listings within a group,
      CVTC        cross-group covariances (including the same-listing
                  exclusion term: a listing books at most one customer).

    The pair covariances reduce to
        N Cov(x_l, x'_l') -> -lam [a psi~^2 D1 D1' + (1-a) psi^2 D0 D0']
    where D1/D0 are the derivatives of the per-listing acceptance means
    with respect to the treated/control application intensities
    (conditioning on the realized application totals and the binomial
    fluctuation of those totals merge through the Stein identity).  The
    decomposition is validated against Monte Carlo at several parameter
    points, including the acceptance gate's full-scale run.
    """
    _check_homog_params(phi, phi_t, lam, a_c, "a_c")
    a = a_c
    psi = -math.expm1(-phi)
    psi_t = -math.expm1(-phi_t)
    pbar = (1.0 - a) * psi + a * psi_t
    if pbar == 0.0:  # no applications ever: estimator is identically zero
        return CrVarianceLimit(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    rho = lam * pbar
    q = a * psi_t / pbar                     # treated share of applications
    e_rho = math.exp(-rho)
    booked = -math.expm1(-rho)               # limit booking probability
    f_rho = _f_scalar(rho)

    e1 = q * booked                          # P(listing accepts a treated customer)
    e0 = (1.0 - q) * booked
    vt = e1 * (1.0 - e1) / a**2
    vc = e0 * (1.0 - e0) / (1.0 - a) ** 2

    # Sensitivities of the two acceptance means to one extra treated (D*)
    # or control (C*) application.
    d1 = q * e_rho + (1.0 - q) * f_rho
    d0 = q * (e_rho - f_rho)
    c1 = (1.0 - q) * (e_rho - f_rho)
    c0 = (1.0 - q) * e_rho + q * f_rho
    k1 = lam * a * psi_t**2
    k0 = lam * (1.0 - a) * psi**2
    cvtt = (-k1 * d1 * d1 - k0 * d0 * d0) / a**2
    cvcc = (-k1 * c1 * c1 - k0 * c0 * c0) / (1.0 - a) ** 2
    cvtc = (-2.0 * (-k1 * d1 * c1 - k0 * d0 * c0) + 2.0 * e1 * e0) / (a * (1.0 - a))
    total = vt + vc + cvtt + cvcc + cvtc
    return CrVarianceLimit(total=total, vt=vt, vc=vc, cvtt=cvtt, cvcc=cvcc, cvtc=cvtc)


def variance_approx_ratio(phi: float, phi_t: float, lam: float, design: DesignKind) -> float:
    """Scaled variance at a 50-50 allocation over the grid-optimal one.

    The optimum is taken over the 99-point allocation grid; the ratio is
    >= 1 by construction since 0.5 is a grid point.
    """
    if design is DesignKind.CR:
        var = lambda a: cr_variance_limit(phi, phi_t, lam, a).total
    elif design is DesignKind.LR:
        var = lambda a: lr_variance_limit(phi, phi_t, lam, a).total
    else:
        raise ValueError(f"variance ratio is defined for CR/LR, got {design}")
    values = [var(float(a)) for a in ALLOCATION_GRID]
    return values[49] / min(values)


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------


def calibrate_phi(target_booking_rate: float, lam: float, tol: float = 1e-10) -> float:
    """Homogeneous consideration rate giving a target booking fraction.

    Solves 1 - exp(-lam * (1 - exp(-phi))) = target by bisection on
    [1e-9, 50].  The achievable rates are bounded by 1 - exp(-lam)
    (every listing booked requires unbounded consideration), so targets
    at or above that supremum are rejected.
    """
    if not (math.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be positive and finite, got {lam!r}")
    if not 0.0 < target_booking_rate < 1.0:
        raise ValueError(f"target booking rate must lie in (0, 1), got {target_booking_rate!r}")
    supremum = -math.expm1(-lam)
    if target_booking_rate >= supremum:
        raise ValueError(
            f"target booking rate {target_booking_rate} is not achievable at "
            f"lambda={lam}: the supremum over consideration rates is {supremum:.6g}"
        )

    def rate(p: float) -> float:
        return -math.expm1(-lam * -math.expm1(-p))

    lo, hi = 1e-9, 50.0
    if rate(lo) > target_booking_rate:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rate(mid) > target_booking_rate:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
