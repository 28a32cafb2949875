"""End-to-end command-line runs against temporary CSV files."""

import json
import subprocess
import sys

import numpy as np
import pytest

CLI = [sys.executable, "-m", "curereg.cli"]
DATA_ARGS = ["--time-col", "t", "--status-col", "status",
             "--covariates", "x1,x2"]


def run_cli(*args):
    return subprocess.run(
        [*CLI, *[str(a) for a in args]], capture_output=True, text=True
    )


def write_data_csv(path, n=100, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 1.0, (n, 2))
    eta = 0.3 + x @ np.array([1.0, 0.5])
    cured = rng.random(n) < 1.0 / (1.0 + np.exp(-eta))
    t0 = 1.2 * rng.random(n) ** 0.7
    c = rng.uniform(0.2, 2.4, n)
    y = np.where(cured, c, np.minimum(t0, c))
    delta = ((~cured) & (t0 <= c)).astype(int)
    lines = ["t,status,x1,x2"]
    for i in range(n):
        lines.append(
            f"{float(y[i])!r},{int(delta[i])},"
            f"{float(x[i, 0])!r},{float(x[i, 1])!r}"
        )
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture()
def data_csv(tmp_path):
    return write_data_csv(tmp_path / "toy.csv")


class TestFit:
    def test_writes_a_complete_report(self, data_csv, tmp_path):
        out = tmp_path / "out"
        res = run_cli("fit", data_csv, *DATA_ARGS, "--out", out)
        assert res.returncode == 0, res.stderr
        payload = json.loads((out / "fit.json").read_text())
        assert set(payload["coefficients"]) == {"intercept", "x1", "x2"}
        assert payload["converged"] is True
        assert payload["censoring"]["kind"] == "cox"
        assert set(payload["censoring"]["coefficients"]) == {"x1", "x2"}
        assert payload["config"]["command"] == "fit"

    def test_reruns_are_byte_identical(self, data_csv, tmp_path):
        res1 = run_cli("fit", data_csv, *DATA_ARGS, "--out", tmp_path / "a")
        res2 = run_cli("fit", data_csv, *DATA_ARGS, "--out", tmp_path / "b")
        assert res1.returncode == 0 and res2.returncode == 0
        assert (tmp_path / "a" / "fit.json").read_bytes() == \
            (tmp_path / "b" / "fit.json").read_bytes()

    def test_bstar_csv_carries_config_and_all_subjects(self, data_csv,
                                                       tmp_path):
        out = tmp_path / "out"
        res = run_cli("fit", data_csv, *DATA_ARGS, "--censor", "km",
                      "--bstar-csv", "--out", out)
        assert res.returncode == 0, res.stderr
        lines = (out / "bstar.csv").read_text().splitlines()
        assert lines[0].startswith("# config: {")
        assert lines[1] == "y,delta,b_star,survivor_left_limit"
        assert len(lines) == 2 + 100

    def test_bootstrap_block_appears_on_request(self, data_csv, tmp_path):
        out = tmp_path / "out"
        res = run_cli("fit", data_csv, *DATA_ARGS, "--censor", "km",
                      "--bootstrap", 10, "--seed", 1, "--out", out)
        assert res.returncode == 0, res.stderr
        payload = json.loads((out / "fit.json").read_text())
        boot = payload["bootstrap"]
        assert boot["n_replicates"] == 10
        assert set(boot["se"]) == {"intercept", "x1", "x2"}
        assert boot["ci_lower"]["x1"] <= boot["ci_upper"]["x1"]

    def test_beran_censoring_runs_with_a_bandwidth(self, data_csv, tmp_path):
        out = tmp_path / "out"
        res = run_cli("fit", data_csv, *DATA_ARGS, "--censor", "beran",
                      "--beran-bandwidth", 5.0, "--beran-index", "x2",
                      "--out", out)
        assert res.returncode == 0, res.stderr
        payload = json.loads((out / "fit.json").read_text())
        assert payload["censoring"]["kind"] == "beran"


class TestSelect:
    def test_path_and_selection_outputs(self, data_csv, tmp_path):
        out = tmp_path / "out"
        res = run_cli("select", data_csv, *DATA_ARGS, "--censor", "km",
                      "--n-lambda", 8, "--cv-folds", 3, "--out", out)
        assert res.returncode == 0, res.stderr
        lines = (out / "path.csv").read_text().splitlines()
        assert lines[0].startswith("# config: {")
        assert lines[1] == "lambda,x1,x2,df,cve"
        assert len(lines) == 2 + 8
        payload = json.loads((out / "selection.json").read_text())
        assert payload["selected_lambda"] > 0.0
        assert 0 <= payload["selected_index"] < 8
        assert set(payload["coefficients"]) == {"intercept", "x1", "x2"}
        assert isinstance(payload["active"]["x1"], bool)
        assert set(payload["adaptive_weights"]) == {"x1", "x2"}

    def test_reruns_are_byte_identical(self, data_csv, tmp_path):
        args = ["select", data_csv, *DATA_ARGS, "--censor", "km",
                "--n-lambda", 6, "--cv-folds", 3, "--seed", 4]
        res1 = run_cli(*args, "--out", tmp_path / "a")
        res2 = run_cli(*args, "--out", tmp_path / "b")
        assert res1.returncode == 0 and res2.returncode == 0
        for name in ("path.csv", "selection.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_svg_plot_is_emitted_and_stable(self, data_csv, tmp_path):
        args = ["select", data_csv, *DATA_ARGS, "--censor", "km",
                "--n-lambda", 6, "--cv-folds", 3, "--svg"]
        res1 = run_cli(*args, "--out", tmp_path / "a")
        assert res1.returncode == 0, res1.stderr
        svg = (tmp_path / "a" / "path.svg").read_text()
        assert svg.lstrip().startswith("<?xml")
        assert "<svg" in svg
        res2 = run_cli(*args, "--out", tmp_path / "b")
        assert res2.returncode == 0
        assert (tmp_path / "a" / "path.svg").read_bytes() == \
            (tmp_path / "b" / "path.svg").read_bytes()


class TestCensor:
    def test_km_curve_over_unique_times(self, data_csv, tmp_path):
        out = tmp_path / "out"
        res = run_cli("censor", data_csv, *DATA_ARGS, "--censor", "km",
                      "--out", out)
        assert res.returncode == 0, res.stderr
        lines = (out / "censor_curve.csv").read_text().splitlines()
        assert lines[1] == "time,survivor,survivor_left_limit"
        assert len(lines) == 2 + 100  # draws are continuous, no ties
        assert not (out / "censor_cox.json").exists()

    def test_cox_writes_model_summary_and_honors_at(self, data_csv,
                                                    tmp_path):
        out = tmp_path / "out"
        res = run_cli("censor", data_csv, *DATA_ARGS, "--censor", "cox",
                      "--at", "0.5,-1.0", "--out", out)
        assert res.returncode == 0, res.stderr
        payload = json.loads((out / "censor_cox.json").read_text())
        assert payload["converged"] is True
        assert payload["config"]["at"] == [0.5, -1.0]

    def test_wrong_at_length_is_a_config_error(self, data_csv, tmp_path):
        res = run_cli("censor", data_csv, *DATA_ARGS, "--at", "1,2,3",
                      "--out", tmp_path / "out")
        assert res.returncode == 2
        assert "--at needs 2 values" in res.stderr


class TestSimulate:
    TOML = (
        "nu = 0.0\n"
        "pi_m = 0.4\n"
        "rho = 0.1\n"
        "n = 120\n"
        "n_replicates = 3\n"
        "mc_size = 20000\n"
        "seed = 2\n"
    )

    def test_toml_study_writes_a_report_row(self, tmp_path):
        cfg = tmp_path / "study.toml"
        cfg.write_text(self.TOML)
        out = tmp_path / "out"
        res = run_cli("simulate", cfg, "--out", out, "--raw")
        assert res.returncode == 0, res.stderr
        lines = (out / "sim_report.csv").read_text().splitlines()
        assert lines[0].startswith("# config: {")
        header = lines[1].split(",")
        assert header[:8] == ["nu", "pi_m", "rho", "n", "n_replicates",
                              "n_completed", "n_failed", "tau"]
        assert "bias_intercept" in header and "sd_x2" in header
        assert len(lines) == 3
        raw = (out / "sim_replicates.csv").read_text().splitlines()
        assert raw[1] == "replicate,theta_intercept,theta_x1,theta_x2"
        assert len(raw) == 2 + 3

    def test_json_config_is_equivalent(self, tmp_path):
        cfg = tmp_path / "study.json"
        cfg.write_text(json.dumps({
            "nu": 0.0, "pi_m": 0.4, "rho": 0.1, "n": 120,
            "n_replicates": 3, "mc_size": 20000, "seed": 2,
        }))
        out = tmp_path / "out"
        res = run_cli("simulate", cfg, "--out", out)
        assert res.returncode == 0, res.stderr
        row = (out / "sim_report.csv").read_text().splitlines()[2].split(",")
        assert row[5] == "3"  # n_completed
        assert row[6] == "0"  # n_failed

    def test_unknown_key_is_rejected(self, tmp_path):
        cfg = tmp_path / "study.toml"
        cfg.write_text(self.TOML + "typo_key = 1\n")
        res = run_cli("simulate", cfg, "--out", tmp_path / "out")
        assert res.returncode == 2
        assert "unknown key" in res.stderr

    def test_missing_required_key_is_rejected(self, tmp_path):
        cfg = tmp_path / "study.toml"
        cfg.write_text("nu = 0.0\n")
        res = run_cli("simulate", cfg, "--out", tmp_path / "out")
        assert res.returncode == 2
        assert "missing required key" in res.stderr

    def test_bad_penalty_value_is_rejected(self, tmp_path):
        cfg = tmp_path / "study.toml"
        cfg.write_text(self.TOML + 'penalty = "ridge"\n')
        res = run_cli("simulate", cfg, "--out", tmp_path / "out")
        assert res.returncode == 2
        assert "penalty" in res.stderr


class TestExitCodes:
    def test_version_flag(self):
        res = run_cli("--version")
        assert res.returncode == 0
        assert "curereg" in res.stdout

    def test_missing_required_option_is_a_usage_error(self, data_csv,
                                                      tmp_path):
        res = run_cli("fit", data_csv, "--status-col", "status",
                      "--covariates", "x1,x2", "--out", tmp_path / "out")
        assert res.returncode == 2

    def test_config_error_exits_2(self, data_csv, tmp_path):
        # beran without a bandwidth cannot be configured
        res = run_cli("fit", data_csv, *DATA_ARGS, "--censor", "beran",
                      "--out", tmp_path / "out")
        assert res.returncode == 2
        assert "beran-bandwidth" in res.stderr

    def test_data_error_exits_3(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("t,status,x1,x2\n1.0,1,0.5,oops\n2.0,0,0.1,0.2\n")
        res = run_cli("fit", bad, *DATA_ARGS, "--out", tmp_path / "out")
        assert res.returncode == 3
        assert "error: data:" in res.stderr

    def test_convergence_error_exits_4(self, tmp_path):
        # every event lies below zero on a tiny covariate scale and every
        # censored subject above it: separated indicators with gradients
        # too flat to converge, so the estimates run off to infinity
        rows = ["t,status,x1,x2"]
        for k in range(1, 21):
            rows.append(f"1.0,1,{-0.002 * k!r},0.0001")
            rows.append(f"2.0,0,{0.002 * k!r},-0.0001")
        sep = tmp_path / "sep.csv"
        sep.write_text("\n".join(rows) + "\n")
        res = run_cli("fit", sep, *DATA_ARGS, "--censor", "km",
                      "--out", tmp_path / "out")
        assert res.returncode == 4
        assert "error: convergence:" in res.stderr
