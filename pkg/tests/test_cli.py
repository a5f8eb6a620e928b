"""CLI smoke tests using Click's CliRunner."""
import json

import pytest
from click.testing import CliRunner

from w2geo.audit import RUN_LOG_NAME, read_records
from w2geo.cli import main
from w2geo.experiments import EXPERIMENTS


@pytest.fixture
def runner():
    return CliRunner()


def _write(path, payload):
    path.write_text(json.dumps(payload))
    return path


def _read(path):
    return json.loads(path.read_text())


@pytest.fixture
def out(tmp_path):
    return tmp_path / "out" / "result.json"


@pytest.fixture
def ensemble_file(tmp_path, plane_space_dict):
    segment = {"atoms": [[0.0, 0.0], [1.0, 0.0]]}
    shifted = {"atoms": [[0.0, 1.0], [1.0, 1.0]]}
    return _write(tmp_path / "ensemble.json", {"space": plane_space_dict, "measures": [segment, shifted]})


@pytest.fixture
def dirac_file(tmp_path, plane_space_dict):
    return _write(tmp_path / "dirac.json", {"space": plane_space_dict, "atoms": [[1.0, 0.0]]})


# ---------------------------------------------------------------------------
# --help
# ---------------------------------------------------------------------------

def test_main_help(runner):
    result = runner.invoke(main, ["--help"])
    assert result.exit_code == 0
    for command in ("w2", "interp", "frechet", "barycenter", "symmetry", "verify", "example"):
        assert command in result.output
    assert "--space" in result.output
    assert "--seed" in result.output


def test_example_help_lists_experiments(runner):
    result = runner.invoke(main, ["example", "--help"], terminal_width=200)
    assert result.exit_code == 0
    for name in EXPERIMENTS:
        assert name in result.output


# ---------------------------------------------------------------------------
# w2
# ---------------------------------------------------------------------------

def test_w2_writes_out_file(runner, mu_file, nu_file, out):
    result = runner.invoke(main, ["--out", str(out), "w2", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    assert f"Wrote {out}" in result.output
    payload = _read(out)
    assert payload["cost"] == pytest.approx(1.0)
    assert payload["distance"] == pytest.approx(1.0)
    assert "entries" not in payload


def test_w2_with_plan(runner, mu_file, nu_file, out):
    result = runner.invoke(main, ["--out", str(out), "w2", "--plan", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    entries = _read(out)["entries"]
    assert sorted((e["source"], e["target"]) for e in entries) == [(0, 0), (1, 1)]


def test_w2_csv_to_stdout(runner, mu_file, nu_file):
    result = runner.invoke(main, ["--format", "csv", "w2", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    assert "source,target,mass,sq_distance" in result.output


def test_w2_space_from_command_line(runner, tmp_path, out):
    a = _write(tmp_path / "a.json", {"atoms": [[0.0], [2.0]]})
    b = _write(tmp_path / "b.json", {"atoms": [[1.0]]})
    result = runner.invoke(main, ["--space", "euclidean:dim=1", "--out", str(out), "w2", str(a), str(b)])
    assert result.exit_code == 0, result.output
    assert _read(out)["cost"] == pytest.approx(1.0)


def test_bad_space_spec(runner, mu_file, nu_file):
    result = runner.invoke(main, ["--space", "torus", "w2", str(mu_file), str(nu_file)])
    assert result.exit_code == 2
    assert "--space" in result.output


def test_unnormalized_weights_reported(runner, tmp_path, plane_space_dict, nu_file):
    bad = _write(tmp_path / "bad.json", {"space": plane_space_dict, "atoms": [[0, 0], [1, 0]], "weights": [1, 1]})
    result = runner.invoke(main, ["w2", str(bad), str(nu_file)])
    assert result.exit_code == 1
    assert "MeasureError" in result.output


def test_malformed_json_reported(runner, tmp_path, nu_file):
    bad = tmp_path / "bad.json"
    bad.write_text("{oops")
    result = runner.invoke(main, ["w2", str(bad), str(nu_file)])
    assert result.exit_code == 1
    assert "MalformedInputError" in result.output


def test_w2_run_log(runner, mu_file, nu_file, tmp_path):
    log = tmp_path / "runs.jsonl"
    result = runner.invoke(main, ["--log-file", str(log), "--seed", "4", "w2", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    [record] = read_records(log)
    assert record["event"] == "w2"
    assert record["seed"] == 4
    assert record["detail"] == "cost=1"


# ---------------------------------------------------------------------------
# interp / frechet
# ---------------------------------------------------------------------------

def test_interp_displacement(runner, mu_file, nu_file, out):
    result = runner.invoke(main, ["--out", str(out), "interp", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    payload = _read(out)
    assert payload["provenance"] == "displacement"
    assert len(payload["grid"]) == 11
    assert payload["variances"] == pytest.approx([0.25] * 11)
    assert payload["convexity"]["convex"] is True


def test_interp_linear_is_not_convex(runner, mu_file, nu_file, out):
    args = ["--out", str(out), "interp", "--kind", "linear", "--steps", "5", str(mu_file), str(nu_file)]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    payload = _read(out)
    assert payload["variances"] == pytest.approx([0.25, 0.4375, 0.5, 0.4375, 0.25])
    assert payload["convexity"]["convex"] is False


def test_interp_without_variance(runner, mu_file, nu_file, out):
    result = runner.invoke(main, ["--out", str(out), "interp", "--no-variance", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    assert "variances" not in _read(out)


def test_interp_csv(runner, mu_file, nu_file, out):
    result = runner.invoke(main, ["--out", str(out), "--format", "csv", "interp", "--steps", "3", str(mu_file), str(nu_file)])
    assert result.exit_code == 0, result.output
    lines = out.read_text().splitlines()
    assert lines[0] == "t,atom,weight,tag,x0,x1"
    assert len(lines) == 1 + 3 * 2


def test_frechet(runner, mu_file, out):
    result = runner.invoke(main, ["--out", str(out), "frechet", str(mu_file)])
    assert result.exit_code == 0, result.output
    payload = _read(out)
    assert payload["value"] == pytest.approx(0.25)
    assert payload["point"]["chart"] == pytest.approx([0.5, 0.0])


def test_configured_tolerances_reach_measure_loading(runner, tmp_path, out):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("tolerances:\n  merge: 0.5\n")
    m = _write(tmp_path / "m.json", {"atoms": [[0.0], [0.3]]})
    args = ["--config", str(cfg), "--space", "euclidean:dim=1", "--out", str(out), "frechet", str(m)]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    assert _read(out)["value"] == pytest.approx(0.0)


# ---------------------------------------------------------------------------
# barycenter / symmetry
# ---------------------------------------------------------------------------

def test_barycenter(runner, ensemble_file, out):
    result = runner.invoke(main, ["--out", str(out), "barycenter", str(ensemble_file)])
    assert result.exit_code == 0, result.output
    payload = _read(out)
    assert payload["objective"] == pytest.approx(0.25)
    assert payload["converged"] is True


def test_barycenter_history_csv(runner, ensemble_file, out):
    result = runner.invoke(main, ["--out", str(out), "--format", "csv", "barycenter", "--max-iter", "3", str(ensemble_file)])
    assert result.exit_code == 0, result.output
    assert out.read_text().splitlines()[0] == "iteration,objective"


def test_barycenter_bad_stop_tol(runner, ensemble_file):
    result = runner.invoke(main, ["barycenter", "--stop-tol", "0", str(ensemble_file)])
    assert result.exit_code == 2


def test_symmetry_cyclic(runner, dirac_file, out):
    result = runner.invoke(main, ["--out", str(out), "symmetry", "--cyclic", "4", str(dirac_file)])
    assert result.exit_code == 0, result.output
    payload = _read(out)
    assert payload["group_order"] == 4
    assert payload["var_l2"] == pytest.approx(1.0)
    assert payload["var_mu"] == 0.0
    assert payload["right_holds"] is True


def test_symmetry_group_file(runner, tmp_path, out):
    line = {"kind": "euclidean", "dim": 1}
    m = _write(tmp_path / "m.json", {"space": line, "atoms": [[0.0], [1.0]]})
    g = _write(tmp_path / "g.json", {"generators": [{"matrix": [[-1.0]]}]})
    result = runner.invoke(main, ["--out", str(out), "symmetry", "--group", str(g), str(m)])
    assert result.exit_code == 0, result.output
    payload = _read(out)
    assert payload["group_order"] == 2
    assert payload["var_l2"] == pytest.approx(0.5)


def test_symmetry_needs_one_group(runner, dirac_file):
    result = runner.invoke(main, ["symmetry", str(dirac_file)])
    assert result.exit_code == 2
    assert "exactly one" in result.output


# ---------------------------------------------------------------------------
# example
# ---------------------------------------------------------------------------

def test_example_cylinder(runner):
    result = runner.invoke(main, ["example", "cylinder"])
    assert result.exit_code == 0, result.output
    assert "All 1 experiment(s) passed." in result.output
    assert "var_half" in result.output


def test_example_json_out(runner, out):
    result = runner.invoke(main, ["--seed", "3", "--out", str(out), "example", "convexity", "--trials", "1"])
    assert result.exit_code == 0, result.output
    [report] = _read(out)
    assert report["name"] == "convexity"
    assert report["parameters"]["seed"] == 3
    assert report["passed"] is True


def test_example_trials_only_for_suites(runner):
    result = runner.invoke(main, ["example", "cylinder", "--trials", "2"])
    assert result.exit_code == 2
    assert "--trials" in result.output


def test_example_saves_reports(runner, tmp_path):
    reports = tmp_path / "reports"
    cfg = tmp_path / "config.yaml"
    cfg.write_text(f"report_dir: {reports}\n")
    result = runner.invoke(main, ["--config", str(cfg), "example", "balloon"])
    assert result.exit_code == 0, result.output
    assert len(list(reports.glob("balloon_*.json"))) == 1
    [record] = read_records(reports / RUN_LOG_NAME)
    assert record["event"] == "experiment"
    assert record["passed"] is True


def test_invalid_config(runner, tmp_path):
    cfg = tmp_path / "config.yaml"
    cfg.write_text("seed: -3\n")
    result = runner.invoke(main, ["--config", str(cfg), "example", "cylinder"])
    assert result.exit_code == 1
    assert "Invalid configuration" in result.output
