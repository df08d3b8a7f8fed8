"""Command-line front end.

Subcommands: analytic, simulate, sweep, oracle, calibrate, recommend.
Configuration comes from a JSON file (--config) with flag overrides;
unknown config fields are rejected so typos in scientific configs fail
loudly instead of silently running the wrong experiment.  Every float
in JSON output is printed with 17 significant digits, which
round-trips, so identical runs produce byte-identical files.

Exit codes: 0 success, 2 configuration/usage error (message names the
offending field), 1 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from .designs import DesignKind, DesignSpec
from .experiment import run_replications
from .market_sim import FiniteMarket, active_backend, run_many
from .meanfield import MarketSpec, asymptotic_bias, calibrate_phi, gte_limit
from .oracle import TinyMarket, exact_expectations
from .sweeps import SWEEP_COLUMNS, SweepPlan, recommend_design, run_sweep

__all__ = ["main", "ConfigError"]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""


# --------------------------------------------------------------------------
# config parsing (fail-closed)
# --------------------------------------------------------------------------


def _require_keys(block: dict, allowed: set[str], where: str):
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown field(s) in {where}: {', '.join(sorted(unknown))}")


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    _require_keys(cfg, {"market", "design", "execution", "output", "sweep"}, "config")
    return cfg


def _market_from_config(block: dict, args) -> MarketSpec:
    block = dict(block or {})
    _require_keys(
        block,
        {"phi", "phi_tilde", "lambda", "customer_types", "listing_types",
         "sigma", "tau", "phi_control", "phi_treatment"},
        "market",
    )
    if getattr(args, "phi", None) is not None:
        block["phi"] = args.phi
    if getattr(args, "phi_tilde", None) is not None:
        block["phi_tilde"] = args.phi_tilde
    if getattr(args, "demand_ratio", None) is not None:
        block["lambda"] = args.demand_ratio

    shorthand = {"phi", "phi_tilde"} & set(block)
    full = {"sigma", "tau", "phi_control", "phi_treatment"} & set(block)
    if shorthand and full:
        raise ConfigError("market: homogeneous shorthand (phi/phi_tilde) and full matrices are mutually exclusive")
    if "lambda" not in block:
        raise ConfigError("market.lambda is required")
    try:
        if shorthand:
            if shorthand != {"phi", "phi_tilde"}:
                raise ConfigError("market: homogeneous shorthand needs both phi and phi_tilde")
            return MarketSpec.homogeneous(float(block["phi"]), float(block["phi_tilde"]), float(block["lambda"]))
        missing = {"sigma", "tau", "phi_control", "phi_treatment"} - set(block)
        if missing:
            raise ConfigError(f"market: missing field(s): {', '.join(sorted(missing))}")
        return MarketSpec.from_masses(
            sigma=block["sigma"],
            tau=block["tau"],
            demand_ratio=float(block["lambda"]),
            phi_control=block["phi_control"],
            phi_treatment=block["phi_treatment"],
            customer_types=block.get("customer_types"),
            listing_types=block.get("listing_types"),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"market: {exc}")


def _design_from_config(block: dict, args) -> DesignSpec:
    block = dict(block or {})
    _require_keys(block, {"kind", "allocation"}, "design")
    if getattr(args, "design", None) is not None:
        block["kind"] = args.design
    if getattr(args, "alloc", None) is not None:
        block["allocation"] = args.alloc
    kind_raw = block.get("kind")
    if kind_raw is None:
        raise ConfigError("design.kind is required (gc, gt, cr, or lr)")
    try:
        kind = DesignKind(str(kind_raw).lower())
    except ValueError:
        raise ConfigError(f"design.kind must be one of gc, gt, cr, lr; got {kind_raw!r}")
    try:
        return DesignSpec(kind, block.get("allocation"))
    except ValueError as exc:
        raise ConfigError(f"design: {exc}")


def _apply_output_block(cfg: dict, args):
    """Config-level output defaults; explicit flags win."""
    block = dict(cfg.get("output", {}) or {})
    _require_keys(block, {"format", "path"}, "output")
    if block.get("format") is not None and "--format" not in (args.raw_argv or []):
        fmt = str(block["format"])
        if fmt not in ("json", "csv", "text"):
            raise ConfigError(f"output.format must be json, csv, or text; got {fmt!r}")
        args.format = fmt
    if block.get("path") is not None and args.output is None:
        args.output = str(block["path"])


def _execution_from_config(block: dict, args) -> dict:
    block = dict(block or {})
    _require_keys(block, {"n", "replications", "master_seed", "mode"}, "execution")
    if getattr(args, "n", None) is not None:
        block["n"] = args.n
    if getattr(args, "reps", None) is not None:
        block["replications"] = args.reps
    if getattr(args, "seed", None) is not None:
        block["master_seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        block["mode"] = args.mode
    return block


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------


def _format_float(x) -> str:
    return format(float(x), ".17g")


def _dump_json(payload: dict) -> str:
    """JSON with every float at 17 significant digits (lossless round-trip)."""
    return _write_json_value(payload, indent=0) + "\n"


def _write_json_value(value, indent: int) -> str:
    pad = "  " * indent
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = []
        for k, v in value.items():
            items.append(f'{pad}  {json.dumps(str(k))}: {_write_json_value(v, indent + 1)}')
        return "{\n" + ",\n".join(items) + f"\n{pad}}}"
    if isinstance(value, (list, tuple)):
        if not len(value):
            return "[]"
        items = [f"{pad}  {_write_json_value(v, indent + 1)}" for v in value]
        return "[\n" + ",\n".join(items) + f"\n{pad}]"
    if isinstance(value, np.ndarray):
        return _write_json_value(value.tolist(), indent)
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "null"
    if isinstance(value, (float, np.floating)):
        return _format_float(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return json.dumps(value)


def _dump_csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        out = []
        for col in columns:
            v = row.get(col)
            if v is None:
                out.append("")
            elif isinstance(v, (float, np.floating)):
                out.append(_format_float(v))
            else:
                out.append(str(v))
        writer.writerow(out)
    return buf.getvalue()


def _emit(text: str, path: str | None):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def _cmd_calibrate(args) -> int:
    lam = args.demand_ratio if args.demand_ratio is not None else 1.0
    phi = calibrate_phi(args.target, lam)
    if args.format == "json":
        _emit(_dump_json({"target_booking_rate": args.target, "lambda": lam, "phi": phi}), args.output)
    else:
        _emit(f"phi={_format_float(phi)}\n", args.output)
    return 0


def _cmd_analytic(args) -> int:
    cfg = _load_config(args.config)
    _apply_output_block(cfg, args)
    spec = _market_from_config(cfg.get("market", {}), args)
    design = _design_from_config(cfg.get("design", {}), args)
    if design.is_randomized:
        report = asymptotic_bias(spec, design)
        payload = {
            "design": design.label(),
            "lambda": spec.demand_ratio,
            "estimator_limit": report.estimator_limit,
            "gte": report.gte_limit,
            "bias": report.bias,
            "relative_bias": report.relative_bias,
        }
    else:
        payload = {"design": design.label(), "lambda": spec.demand_ratio, "gte": gte_limit(spec)}
    _emit(_dump_json(payload), args.output)
    return 0


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config)
    _apply_output_block(cfg, args)
    spec = _market_from_config(cfg.get("market", {}), args)
    design = _design_from_config(cfg.get("design", {}), args)
    exe = _execution_from_config(cfg.get("execution", {}), args)
    for field in ("n", "replications", "master_seed"):
        if field not in exe:
            raise ConfigError(f"execution.{field} is required for simulate")
    summary = run_replications(
        spec, design, int(exe["n"]), int(exe["replications"]), int(exe["master_seed"])
    )
    payload = {
        "design": design.label(),
        "n": int(exe["n"]),
        "replications": summary.replications,
        "master_seed": int(exe["master_seed"]),
        "backend": active_backend(),
        "estimator_mean": summary.estimator_mean,
        "estimator_sd": summary.estimator_sd,
        "gte_reference": summary.gte_reference,
        "bias": summary.bias,
        "relative_bias": summary.relative_bias,
        "mse": summary.mse,
        "scaled_variance": summary.scaled_variance,
    }
    if args.format == "csv":
        row = {
            "axis": None, "design": design.label(), "allocation": design.allocation,
            "lambda": spec.demand_ratio, "n": int(exe["n"]), "reps": summary.replications,
            "est": summary.estimator_mean, "gte": summary.gte_reference,
            "bias": summary.bias, "rel_bias": summary.relative_bias,
            "sd": summary.estimator_sd, "mse": summary.mse,
            "scaled_var": summary.scaled_variance, "error": None,
        }
        _emit(_dump_csv([row], SWEEP_COLUMNS), args.output)
    else:
        _emit(_dump_json(payload), args.output)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    _apply_output_block(cfg, args)
    spec = _market_from_config(cfg.get("market", {}), args)
    sweep_block = dict(cfg.get("sweep", {}))
    _require_keys(sweep_block, {"axis", "values", "designs"}, "sweep")
    if args.axis is not None:
        sweep_block["axis"] = args.axis
    if args.values is not None:
        try:
            sweep_block["values"] = [float(v) for v in args.values.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"--values must be a comma-separated list of numbers, got {args.values!r}")
    if "axis" not in sweep_block or "values" not in sweep_block:
        raise ConfigError("sweep.axis and sweep.values are required")

    designs = []
    if args.design is not None or not sweep_block.get("designs"):
        designs.append(_design_from_config(cfg.get("design", {}), args))
    else:
        for i, d in enumerate(sweep_block["designs"]):
            if not isinstance(d, dict):
                raise ConfigError(f"sweep.designs[{i}] must be an object")
            designs.append(_design_from_config(d, argparse.Namespace(design=None, alloc=None)))
    exe = _execution_from_config(cfg.get("execution", {}), args)
    try:
        plan = SweepPlan(
            base=spec,
            axis=str(sweep_block["axis"]),
            values=tuple(sorted(float(v) for v in sweep_block["values"])),
            designs=tuple(designs),
            mode=str(exe.get("mode", "analytic")),
            n=int(exe["n"]) if exe.get("n") is not None else None,
            replications=int(exe.get("replications", 0)),
            master_seed=int(exe.get("master_seed", 0)),
        )
    except ValueError as exc:
        raise ConfigError(f"sweep: {exc}")
    rows = run_sweep(plan)
    if args.format == "json":
        _emit(_dump_json({"columns": list(SWEEP_COLUMNS), "rows": rows}), args.output)
    else:
        _emit(_dump_csv(rows, SWEEP_COLUMNS), args.output)
    return 0


def _cmd_oracle(args) -> int:
    cfg = _load_config(args.config)
    _apply_output_block(cfg, args)
    market_block = dict(cfg.get("market", {}))
    _require_keys(market_block, {"consider_prob", "customer_treated", "listing_treated"}, "market")
    if "consider_prob" not in market_block:
        raise ConfigError("market.consider_prob (per-pair matrix) is required for oracle")
    prob = np.asarray(market_block["consider_prob"], dtype=np.float64)
    if prob.ndim != 2:
        raise ConfigError("market.consider_prob must be a matrix")
    m, n = prob.shape
    try:
        tiny = TinyMarket(
            consider_prob=prob,
            customer_treated=np.asarray(market_block.get("customer_treated", [False] * m), dtype=bool),
            listing_treated=np.asarray(market_block.get("listing_treated", [False] * n), dtype=bool),
        )
    except ValueError as exc:
        raise ConfigError(f"market: {exc}")
    design = _design_from_config(cfg.get("design", {"kind": "gc"}), args)
    result = exact_expectations(tiny, design.kind)
    payload = {
        "design": design.kind.value,
        "probability_mass": result.probability_mass,
        "expected_bookings": result.expected_bookings,
        "expected_bookings_by_customer_group": {
            "control": result.expected_control_customer_bookings,
            "treated": result.expected_treated_customer_bookings,
        },
        "expected_bookings_by_listing_group": {
            "control": result.expected_control_listing_bookings,
            "treated": result.expected_treated_listing_bookings,
        },
        "estimator_mean": result.estimator_mean,
        "estimator_variance": result.estimator_variance,
    }
    if args.check_reps:
        from .experiment import derive_seed

        market = FiniteMarket(
            n_listings=n,
            listing_counts=np.ones(n, dtype=np.int64),
            customer_counts=np.ones(m, dtype=np.int64),
            consider_prob=prob,
            listing_treated=tiny.listing_treated,
            customer_treated=tiny.customer_treated,
        )
        seeds = [derive_seed(args.seed or 0, i) for i in range(args.check_reps)]
        bl, bc = run_many(market, seeds)
        mc_q = bl.sum(axis=1).mean()
        payload["montecarlo_check"] = {
            "replications": args.check_reps,
            "mean_bookings": float(mc_q),
            "abs_error": float(abs(mc_q - result.expected_bookings)),
        }
    _emit(_dump_json(payload), args.output)
    return 0


def _cmd_recommend(args) -> int:
    cfg = _load_config(args.config)
    _apply_output_block(cfg, args)
    spec = _market_from_config(cfg.get("market", {}), args)
    rec = recommend_design(spec, args.objective, args.n)
    payload = {
        "objective": rec.objective,
        "design": rec.kind.value,
        "allocation": rec.allocation,
        "predicted_bias": rec.bias,
        "predicted_scaled_variance": rec.scaled_variance,
        "predicted_sd": rec.sd,
        "predicted_mse": rec.mse,
    }
    _emit(_dump_json(payload), args.output)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, mc: bool = False):
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--phi", type=float, help="homogeneous control consideration rate")
    p.add_argument("--phi-tilde", dest="phi_tilde", type=float, help="homogeneous treatment rate")
    p.add_argument("--lambda", dest="demand_ratio", type=float, help="relative demand (customers per listing)")
    p.add_argument("--design", choices=("gc", "gt", "cr", "lr"))
    p.add_argument("--alloc", type=float, help="treatment allocation in (0,1)")
    if mc:
        p.add_argument("--n", type=int, help="number of listings")
        p.add_argument("--reps", type=int, help="replications")
        p.add_argument("--seed", type=int, help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marketlab",
        description="Two-sided marketplace experiment lab: analytics, simulation, sweeps",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="solve for the consideration rate hitting a booking rate")
    p.add_argument("--target", type=float, required=True, help="target booking fraction in (0,1)")
    p.add_argument("--lambda", dest="demand_ratio", type=float, help="relative demand (default 1)")
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json", "text"), default="text")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("analytic", help="mean-field estimator limits, GTE, and bias")
    _add_common(p)
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("simulate", help="replicated finite-market experiment")
    _add_common(p, mc=True)
    p.add_argument("--mode", choices=("analytic", "montecarlo"), help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="sweep lambda / allocation / alpha / n over designs")
    _add_common(p, mc=True)
    p.add_argument("--axis", choices=("lambda", "allocation", "alpha", "n"))
    p.add_argument("--values", help="comma-separated axis values")
    p.add_argument("--mode", choices=("analytic", "montecarlo", "both"))
    p.set_defaults(func=_cmd_sweep, format_default="csv")

    p = sub.add_parser("oracle", help="exact expectations for a tiny market (M*N <= 12)")
    p.add_argument("--config", required=True, help="JSON config with market.consider_prob")
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--design", choices=("gc", "gt", "cr", "lr"))
    p.add_argument("--alloc", type=float)
    p.add_argument("--check-reps", dest="check_reps", type=int, help="cross-check with Monte Carlo")
    p.add_argument("--seed", type=int, help="master seed for the Monte Carlo check")
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("recommend", help="bias/variance/mse-optimal design and allocation")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--output", help="output path (default: stdout)")
    p.add_argument("--format", choices=("json",), default="json")
    p.add_argument("--phi", type=float)
    p.add_argument("--phi-tilde", dest="phi_tilde", type=float)
    p.add_argument("--lambda", dest="demand_ratio", type=float)
    p.add_argument("--objective", choices=("bias", "variance", "mse"), required=True)
    p.add_argument("--n", type=int, help="market size (required for mse)")
    p.set_defaults(func=_cmd_recommend)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    raw = list(argv) if argv is not None else sys.argv[1:]
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    args.raw_argv = raw
    # sweep defaults to CSV unless asked otherwise
    if args.command == "sweep" and "--format" not in raw:
        args.format = "csv"
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
