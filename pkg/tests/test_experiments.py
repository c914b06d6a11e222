"""Config validation, CLI behaviour, artifact layout, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from bcns.experiments.config import ConfigError, load_config, scenario_defaults, scenario_names
from bcns.experiments.report import fit_report
from bcns.experiments.runner import run


class TestConfig:
    def test_defaults_validate_for_every_scenario(self):
        for name in scenario_names():
            cfg = load_config(name)
            assert cfg["scenario"] == name

    def test_unknown_top_level_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"scenario": "lp-verify", "bogus": 1}))
        with pytest.raises(ConfigError, match="bogus"):
            load_config("lp-verify", path)

    def test_unknown_nested_key_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"grid": {"dim": 2, "n": 64, "half_length_over_pi": 2.0, "oops": 3}}))
        with pytest.raises(ConfigError, match="oops"):
            load_config("lp-verify", path)

    def test_scenario_mismatch_rejected(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"scenario": "linear-decay"}))
        with pytest.raises(ConfigError, match="scenario"):
            load_config("lp-verify", path)

    def test_overrides_win(self):
        cfg = load_config("lp-verify", overrides={"seed": 7})
        assert cfg["seed"] == 7

    def test_unknown_scenario(self):
        with pytest.raises(ConfigError, match="unknown scenario"):
            scenario_defaults("frobnicate")


@pytest.fixture(scope="module")
def lp_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("lpv")
    status = run(load_config("lp-verify"), out)
    return status, out


class TestRunArtifacts:
    def test_exit_status_zero(self, lp_out):
        status, _ = lp_out
        assert status == 0

    def test_artifacts_present(self, lp_out):
        _, out = lp_out
        assert (out / "results.csv").exists()
        assert (out / "summary.json").exists()
        svgs = list(out.glob("*.svg"))
        assert svgs

    def test_every_svg_series_in_csv(self, lp_out):
        _, out = lp_out
        import csv

        with open(out / "results.csv", newline="") as fh:
            reader = csv.DictReader(fh)
            assert reader.fieldnames == ["series", "index", "x", "value"]
            series = {row["series"] for row in reader}
        for svg in out.glob("*.svg"):
            assert svg.stem in series

    def test_summary_names_failed_checks(self, lp_out):
        _, out = lp_out
        blob = json.loads((out / "summary.json").read_text())
        assert blob["status"] == "pass"
        assert blob["failed_checks"] == []
        assert all({"name", "passed", "value", "threshold"} <= set(a) for a in blob["assertions"])

    def test_rerun_same_seed_byte_identical(self, lp_out, tmp_path):
        _, out = lp_out
        out2 = tmp_path / "again"
        assert run(load_config("lp-verify"), out2) == 0
        assert (out / "results.csv").read_bytes() == (out2 / "results.csv").read_bytes()

    def test_different_seed_changes_results(self, lp_out, tmp_path):
        _, out = lp_out
        out2 = tmp_path / "seeded"
        assert run(load_config("lp-verify", overrides={"seed": 99}), out2) == 0
        assert (out / "results.csv").read_bytes() != (out2 / "results.csv").read_bytes()


class TestCli:
    def test_invalid_config_exit_code_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"nonsense": True}))
        proc = subprocess.run(
            [sys.executable, "-m", "bcns.cli", "lp-verify", "--config", str(bad)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "config error" in proc.stderr

    def test_scenario_pass_exit_code_0(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "bcns.cli", "lp-verify", "--out", str(tmp_path / "o")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0

    def test_fit_report_subcommand(self, tmp_path):
        out = tmp_path / "o"
        assert run(load_config("lp-verify"), out) == 0
        proc = subprocess.run(
            [
                sys.executable,
                "-m",
                "bcns.cli",
                "fit-report",
                str(out / "results.csv"),
                "--window",
                "0",
                "10",
            ],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0


class TestFitReport:
    def test_power_law_column(self, tmp_path):
        csv_path = tmp_path / "results.csv"
        t = np.linspace(1.0, 100.0, 120)
        rows = ["series,index,x,value"]
        rows += [f"power,{i},{tv:.12e},{(1+tv**2)**-0.75:.12e}" for i, tv in enumerate(t)]
        rows += [f"const,{i},{tv:.12e},{2.0:.12e}" for i, tv in enumerate(t)]
        csv_path.write_text("\n".join(rows) + "\n")
        fits = fit_report(csv_path, (10.0, 90.0))
        assert fits["power"]["exponent"] == pytest.approx(-1.5, abs=1e-6)
        assert fits["const"]["exponent"] == pytest.approx(0.0, abs=1e-12)

    def test_missing_columns_rejected(self, tmp_path):
        bad = tmp_path / "results.csv"
        bad.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="missing columns"):
            fit_report(bad, (0.0, 1.0))
