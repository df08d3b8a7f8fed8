"""CLI tests: subcommand behavior, config validation, output determinism."""

import json

import pytest

from marketlab.cli import main

from conftest import PHI, PHI_T


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def test_calibrate_text(capsys):
    code, out, _ = run_cli(["calibrate", "--target", "0.20", "--lambda", "1"], capsys)
    assert code == 0
    assert out.startswith("phi=0.2524")


def test_calibrate_json(capsys):
    code, out, _ = run_cli(
        ["calibrate", "--target", "0.22", "--lambda", "1", "--format", "json"], capsys
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["phi"] == pytest.approx(0.28563, abs=1e-4)


def test_calibrate_infeasible_is_runtime_error(capsys):
    code, _, err = run_cli(["calibrate", "--target", "0.9", "--lambda", "1"], capsys)
    assert code == 1
    assert "supremum" in err


# ---------------------------------------------------------------------------
# analytic
# ---------------------------------------------------------------------------


def test_analytic_flags(capsys):
    code, out, _ = run_cli(
        ["analytic", "--phi", str(PHI), "--phi-tilde", str(PHI_T),
         "--lambda", "1", "--design", "cr", "--alloc", "0.5"],
        capsys,
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["estimator_limit"] == pytest.approx(0.02256, abs=2e-4)
    assert payload["gte"] == pytest.approx(0.0200, abs=5e-4)
    assert payload["bias"] == pytest.approx(0.00256, abs=2e-4)


def test_analytic_heterogeneous_config(tmp_path, capsys):
    cfg = {
        "market": {
            "sigma": [0.4, 0.6],
            "tau": [1.0],
            "lambda": 1.0,
            "phi_control": [[0.101], [0.354]],
            "phi_treatment": [[0.121], [0.424]],
        },
        "design": {"kind": "lr", "allocation": 0.5},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(["analytic", "--config", str(path)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["bias"] > 0


def test_unknown_config_field_fails_closed(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"market": {"phi": 0.2, "phi_tilde": 0.3, "lambda": 1,
                                           "phii": 0.5}}))
    code, _, err = run_cli(
        ["analytic", "--config", str(path), "--design", "cr", "--alloc", "0.5"], capsys
    )
    assert code == 2
    assert "phii" in err


def test_shorthand_and_matrices_mutually_exclusive(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({
        "market": {"phi": 0.2, "phi_tilde": 0.3, "lambda": 1,
                   "sigma": [1.0], "tau": [1.0],
                   "phi_control": [[0.2]], "phi_treatment": [[0.3]]},
        "design": {"kind": "cr", "allocation": 0.5},
    }))
    code, _, err = run_cli(["analytic", "--config", str(path)], capsys)
    assert code == 2
    assert "mutually exclusive" in err


def test_bad_design_kind(capsys):
    code, _, err = run_cli(
        ["analytic", "--phi", "0.2", "--phi-tilde", "0.3", "--lambda", "1"], capsys
    )
    assert code == 2
    assert "design.kind" in err


def test_unknown_subcommand_usage(capsys):
    assert main(["frobnicate"]) == 2


def test_config_roundtrip_semantically_identical(tmp_path, capsys):
    # parse -> re-serialize -> parse must describe the same run
    cfg = {
        "market": {"phi": 0.2525, "phi_tilde": 0.2856, "lambda": 1.25},
        "design": {"kind": "lr", "allocation": 0.35},
    }
    p1 = tmp_path / "one.json"
    p1.write_text(json.dumps(cfg))
    p2 = tmp_path / "two.json"
    p2.write_text(json.dumps(json.loads(p1.read_text())))
    code1, out1, _ = run_cli(["analytic", "--config", str(p1)], capsys)
    code2, out2, _ = run_cli(["analytic", "--config", str(p2)], capsys)
    assert code1 == code2 == 0
    assert out1 == out2


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def test_simulate_roundtrip_and_identical_files(tmp_path, capsys):
    argv = ["simulate", "--phi", str(PHI), "--phi-tilde", str(PHI_T), "--lambda", "1",
            "--design", "lr", "--alloc", "0.5", "--n", "5000", "--reps", "6",
            "--seed", "42"]
    out1 = tmp_path / "a.json"
    out2 = tmp_path / "b.json"
    assert main(argv + ["--output", str(out1)]) == 0
    assert main(argv + ["--output", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    payload = json.loads(out1.read_text())
    assert payload["replications"] == 6
    assert payload["n"] == 5000
    # 17 significant digits round-trip exactly
    assert isinstance(payload["estimator_mean"], float)


def test_simulate_requires_execution_fields(capsys):
    code, _, err = run_cli(
        ["simulate", "--phi", "0.2", "--phi-tilde", "0.3", "--lambda", "1",
         "--design", "cr", "--alloc", "0.5"],
        capsys,
    )
    assert code == 2
    assert "execution" in err


def test_output_block_routes_to_path(tmp_path, capsys):
    target = tmp_path / "routed.json"
    cfg = {
        "market": {"phi": 0.3, "phi_tilde": 0.35, "lambda": 1.0},
        "design": {"kind": "cr", "allocation": 0.5},
        "output": {"format": "json", "path": str(target)},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(["analytic", "--config", str(path)], capsys)
    assert code == 0
    assert out == ""  # routed to the file
    assert json.loads(target.read_text())["bias"] > 0


def test_simulate_heterogeneous_config(tmp_path, capsys):
    cfg = {
        "market": {
            "sigma": [0.4, 0.6],
            "tau": [1.0],
            "lambda": 1.0,
            "phi_control": [[0.101], [0.354]],
            "phi_treatment": [[0.121], [0.424]],
        },
        "design": {"kind": "cr", "allocation": 0.5},
        "execution": {"n": 4000, "replications": 5, "master_seed": 3},
    }
    path = tmp_path / "het.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(["simulate", "--config", str(path)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["replications"] == 5
    assert payload["gte_reference"] > 0


def test_simulate_csv_format(tmp_path):
    out = tmp_path / "run.csv"
    argv = ["simulate", "--phi", "0.3", "--phi-tilde", "0.35", "--lambda", "1",
            "--design", "cr", "--alloc", "0.5", "--n", "2000", "--reps", "4",
            "--seed", "1", "--format", "csv", "--output", str(out)]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("axis,design,allocation,lambda,n,reps,est,gte,bias")
    assert len(lines) == 2


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def test_sweep_csv_deterministic(tmp_path):
    argv = ["sweep", "--phi", str(PHI), "--phi-tilde", str(PHI_T), "--lambda", "1",
            "--design", "cr", "--alloc", "0.5", "--axis", "lambda",
            "--values", "0.5,1,2"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(argv + ["--output", str(a)]) == 0
    assert main(argv + ["--output", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == ("axis,design,allocation,lambda,n,reps,est,gte,bias,"
                        "rel_bias,sd,mse,scaled_var,error")
    assert len(lines) == 4


def test_sweep_designs_from_config(tmp_path):
    cfg = {
        "market": {"phi": PHI, "phi_tilde": PHI_T, "lambda": 1.0},
        "sweep": {
            "axis": "allocation",
            "values": [0.2, 0.5, 0.8],
            "designs": [{"kind": "cr", "allocation": 0.5}, {"kind": "lr", "allocation": 0.5}],
        },
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--config", str(path), "--output", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 7  # header + 3 values x 2 designs


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------


def test_oracle_subcommand(tmp_path, capsys):
    cfg = {
        "market": {
            "consider_prob": [[0.3], [0.3]],
            "customer_treated": [False, True],
            "listing_treated": [False],
        },
        "design": {"kind": "cr", "allocation": 0.5},
    }
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(["oracle", "--config", str(path)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["expected_bookings"] == pytest.approx(0.51, abs=1e-12)
    assert payload["probability_mass"] == pytest.approx(1.0, abs=1e-12)


def test_oracle_budget_error(tmp_path, capsys):
    cfg = {"market": {"consider_prob": [[0.1] * 5] * 3}}
    path = tmp_path / "big.json"
    path.write_text(json.dumps(cfg))
    code, _, err = run_cli(["oracle", "--config", str(path)], capsys)
    assert code == 2
    assert "budget" in err


def test_oracle_mc_check(tmp_path, capsys):
    cfg = {"market": {"consider_prob": [[0.4, 0.2]]}}
    path = tmp_path / "t.json"
    path.write_text(json.dumps(cfg))
    code, out, _ = run_cli(
        ["oracle", "--config", str(path), "--check-reps", "4000", "--seed", "5"], capsys
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["montecarlo_check"]["abs_error"] < 0.05


# ---------------------------------------------------------------------------
# recommend
# ---------------------------------------------------------------------------


def test_recommend_subcommand(capsys):
    code, out, _ = run_cli(
        ["recommend", "--phi", str(PHI), "--phi-tilde", str(PHI_T), "--lambda", "0.1",
         "--objective", "bias"],
        capsys,
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["design"] == "cr"


def test_recommend_mse_needs_n(capsys):
    code, _, err = run_cli(
        ["recommend", "--phi", "0.3", "--phi-tilde", "0.35", "--lambda", "1",
         "--objective", "mse"],
        capsys,
    )
    assert code == 1
    assert "market size" in err
