"""Parameter sweeps and the design recommender.

run_sweep evaluates a set of designs along one swept axis (relative
demand, treatment allocation, multiplicative lift, or market size) in
analytic mode (mean-field limits), Monte Carlo mode, or both, and
returns rows in a fixed column order ready for CSV serialization.
Infeasible cells become rows with the error column set, never silent
gaps.

recommend_design grid-searches {CR, LR} x allocations for the design
minimizing |bias|, variance, or MSE.  Analytic variance exists only for
homogeneous markets; heterogeneous variance objectives are refused with
a pointer at Monte Carlo mode rather than silently approximated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .designs import DesignKind, DesignSpec
from .experiment import run_replications
from .meanfield import (
    MarketSpec,
    asymptotic_bias,
    cr_variance_limit,
    gte_limit,
    limit_booking_rate,
    lr_variance_limit,
)

__all__ = ["SweepPlan", "SWEEP_COLUMNS", "run_sweep", "bias_band", "recommend_design"]

SWEEP_AXES = ("lambda", "allocation", "alpha", "n")

# fixed CSV column order; error is a trailing diagnostic column
SWEEP_COLUMNS = (
    "axis", "design", "allocation", "lambda", "n", "reps",
    "est", "gte", "bias", "rel_bias", "sd", "mse", "scaled_var", "error",
)

# allocation sub-grid used for bias bands (0.1 steps across [0.1, 0.9])
BAND_ALLOCATIONS = np.round(np.arange(1, 10) * 0.1, 1)


@dataclass(frozen=True)
class SweepPlan:
    base: MarketSpec
    axis: str
    values: tuple[float, ...]
    designs: tuple[DesignSpec, ...]
    mode: str = "analytic"          # analytic | montecarlo | both
    n: int | None = None
    replications: int = 0
    master_seed: int = 0

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ValueError("axis values must be nonempty")
        if any(not math.isfinite(v) for v in values):
            raise ValueError("axis values must be finite")
        if list(values) != sorted(values):
            raise ValueError("axis values must be sorted ascending")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "designs", tuple(self.designs))
        if self.mode not in ("analytic", "montecarlo", "both"):
            raise ValueError(f"mode must be analytic|montecarlo|both, got {self.mode!r}")
        if self.mode in ("montecarlo", "both"):
            if self.n is None or self.replications < 2:
                raise ValueError("montecarlo sweeps need n and replications >= 2")


def _cell_spec_design(plan: SweepPlan, value: float, design: DesignSpec):
    """Apply one axis value; returns (spec, design, n)."""
    spec, n = plan.base, plan.n
    if plan.axis == "lambda":
        spec = spec.with_demand_ratio(value)
    elif plan.axis == "alpha":
        spec = spec.with_multiplicative_lift(value)
    elif plan.axis == "allocation":
        if not design.is_randomized:
            raise ValueError("allocation axis applies only to CR/LR designs")
        design = DesignSpec(design.kind, value)
    elif plan.axis == "n":
        n = int(value)
        if n != value or n < 1:
            raise ValueError(f"n axis values must be positive integers, got {value}")
    return spec, design, n


def _analytic_cells(spec: MarketSpec, design: DesignSpec, n: int | None) -> dict:
    """est/gte/bias columns from the mean-field engine; variance when homogeneous."""
    out: dict = {}
    out["gte"] = gte_limit(spec)
    if design.is_randomized:
        report = asymptotic_bias(spec, design)
        out["est"] = report.estimator_limit
        out["bias"] = report.bias
        out["rel_bias"] = report.relative_bias
        if spec.is_homogeneous:
            phi = float(spec.phi_control[0, 0])
            phi_t = float(spec.phi_treatment[0, 0])
            lam = spec.demand_ratio
            if design.kind is DesignKind.CR:
                sv = cr_variance_limit(phi, phi_t, lam, design.allocation).total
            else:
                sv = lr_variance_limit(phi, phi_t, lam, design.allocation).total
            out["scaled_var"] = sv
            if n:
                out["sd"] = math.sqrt(sv / n)
                out["mse"] = report.bias**2 + sv / n
    else:
        which = "treatment" if design.kind is DesignKind.GLOBAL_TREATMENT else "control"
        out["est"] = limit_booking_rate(spec, which)
    return out


def _montecarlo_cells(spec, design, n, replications, master_seed) -> dict:
    summary = run_replications(spec, design, n, replications, master_seed)
    return {
        "est": summary.estimator_mean,
        "gte": summary.gte_reference,
        "bias": summary.bias,
        "rel_bias": summary.relative_bias,
        "sd": summary.estimator_sd,
        "mse": summary.mse,
        "scaled_var": summary.scaled_variance,
        "reps": replications,
    }


def run_sweep(plan: SweepPlan) -> list[dict]:
    """One row per (axis value x design x mode); deterministic order."""
    rows = []
    modes = {"analytic": ("analytic",), "montecarlo": ("montecarlo",), "both": ("analytic", "montecarlo")}
    for value in plan.values:
        for design in plan.designs:
            for mode in modes[plan.mode]:
                row = dict.fromkeys(SWEEP_COLUMNS, None)
                row["axis"] = value  # the swept value; the axis name lives in the plan
                row["design"] = f"{design.kind.value}:{mode}"
                row["allocation"] = design.allocation
                row["lambda"] = plan.base.demand_ratio
                row["n"] = plan.n
                try:
                    spec, cell_design, n = _cell_spec_design(plan, value, design)
                    row["allocation"] = cell_design.allocation
                    row["lambda"] = spec.demand_ratio
                    row["n"] = n
                    if mode == "analytic":
                        row.update(_analytic_cells(spec, cell_design, n))
                    else:
                        row.update(
                            _montecarlo_cells(spec, cell_design, n, plan.replications, plan.master_seed)
                        )
                except Exception as exc:
                    row["error"] = str(exc)
                rows.append(row)
    return rows


def bias_band(spec: MarketSpec, kind: DesignKind, allocations=BAND_ALLOCATIONS):
    """(min, max) asymptotic bias achievable over an allocation sub-grid."""
    biases = [asymptotic_bias(spec, DesignSpec(kind, float(a))).bias for a in allocations]
    return min(biases), max(biases)


@dataclass(frozen=True)
class Recommendation:
    kind: DesignKind
    allocation: float
    bias: float
    scaled_variance: float | None
    sd: float | None
    mse: float | None
    objective: str
    score: float


# recommendations stay on practically runnable allocations
RECOMMENDER_ALLOCATIONS = np.round(np.arange(5, 96) * 0.01, 2)


def recommend_design(spec: MarketSpec, objective: str, n: int | None = None) -> Recommendation:
    """Grid-search {CR, LR} x allocation for the objective-minimizing design.

    objective: "bias" (|asymptotic bias|), "variance" (scaled variance
    limit), or "mse" (bias^2 + scaled_var / n; requires n because the
    tradeoff is scale-dependent).  Ties prefer the allocation nearest
    0.5, then CR.
    """
    if objective not in ("bias", "variance", "mse"):
        raise ValueError(f"objective must be bias|variance|mse, got {objective!r}")
    if objective == "mse" and not n:
        raise ValueError("mse objective requires a market size n (variance scales as 1/n)")
    needs_variance = objective in ("variance", "mse")
    if needs_variance and not spec.is_homogeneous:
        raise ValueError(
            "variance is unavailable analytically for heterogeneous markets; "
            "use montecarlo mode (run_replications) instead"
        )

    if spec.is_homogeneous:
        phi = float(spec.phi_control[0, 0])
        phi_t = float(spec.phi_treatment[0, 0])
        lam = spec.demand_ratio

    best = None
    for kind in (DesignKind.CR, DesignKind.LR):
        for a in RECOMMENDER_ALLOCATIONS:
            a = float(a)
            bias = asymptotic_bias(spec, DesignSpec(kind, a)).bias
            sv = sd = mse = None
            if spec.is_homogeneous:
                sv = (
                    cr_variance_limit(phi, phi_t, lam, a).total
                    if kind is DesignKind.CR
                    else lr_variance_limit(phi, phi_t, lam, a).total
                )
                if n:
                    sd = math.sqrt(sv / n)
                    mse = bias**2 + sv / n
            if objective == "bias":
                score = abs(bias)
            elif objective == "variance":
                score = sv
            else:
                score = mse
            # lexicographic tie-breaks: score, distance from 0.5, CR first
            key = (score, abs(a - 0.5), 0 if kind is DesignKind.CR else 1)
            if best is None or key < best[0]:
                best = (key, Recommendation(kind, a, bias, sv, sd, mse, objective, score))
    return best[1]
