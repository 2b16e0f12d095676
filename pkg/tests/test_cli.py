"""
Tests for the command-line interface.
"""

import json
import logging

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from src import counterexample as cx
from src.bandit.core import BanditInstance
from src.common.constants import VERSION
from src.common.errors import NumericalAbortError
from src.main import cli, sector_escape_bound
from src.verify.suites import CheckResult, SuiteReport


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture(autouse=True)
def reset_logging():
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()


def _write_config(tmp_path, data):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def _load(path):
    return json.loads(path.read_text(encoding="utf-8"))


class TestCounterexampleCommand:
    def test_writes_grid_and_report(self, runner, out_dir):
        result = runner.invoke(cli, ["counterexample", "--out", str(out_dir)])
        assert result.exit_code == 0, result.output
        grid = pd.read_csv(out_dir / "counterexample_grid.csv")
        assert list(grid.columns) == ["p", "F_PG", "F_EG", "F_DG"]
        assert len(grid) == 10_000
        report = _load(out_dir / "counterexample.json")
        assert report["version"] == VERSION
        assert report["seed"] == 0
        assert report["config"]["eta"] == 1.0
        assert report["result"]["fixed_points"]["pg"]["roots"] == []
        assert report["result"]["fixed_points"]["eg"]["roots"][0] == pytest.approx(1 / 11, abs=1e-9)

    def test_outputs_are_deterministic(self, runner, tmp_path):
        first, second = tmp_path / "a", tmp_path / "b"
        for path in (first, second):
            assert runner.invoke(cli, ["counterexample", "--out", str(path), "--seed", "7"]).exit_code == 0
        grid = "counterexample_grid.csv"
        assert (first / grid).read_bytes() == (second / grid).read_bytes()
        a = _load(first / "counterexample.json")
        b = _load(second / "counterexample.json")
        a["config"].pop("out_dir")
        b["config"].pop("out_dir")
        assert a == b

    def test_out_dir_from_environment(self, runner, out_dir):
        result = runner.invoke(cli, ["counterexample"], env={"GATED_PG_OUT_DIR": str(out_dir)})
        assert result.exit_code == 0, result.output
        assert (out_dir / "counterexample.json").exists()

    def test_numerical_abort_exit_code(self, runner, out_dir, monkeypatch):
        def explode(*args, **kwargs):
            raise NumericalAbortError("diverged", step=4)

        monkeypatch.setattr(cx, "drift_grid", explode)
        result = runner.invoke(cli, ["counterexample", "--out", str(out_dir)])
        assert result.exit_code == 3


class TestFlowCommand:
    def test_demo_flow(self, runner, out_dir):
        args = ["flow", "--out", str(out_dir), "--gate", "pg", "--gate", "eg", "--max-time", "200"]
        result = runner.invoke(cli, args)
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out_dir / "flow_pg.csv")
        assert list(table.columns) == [
            "time", "theta_0", "theta_1", "theta_2", "pi_0", "pi_1", "pi_2", "value",
        ]
        summary = _load(out_dir / "flow_summary.json")["result"]
        assert set(summary["gates"]) == {"pg", "eg"}
        assert "escape_bound" in summary["gates"]["eg"]
        assert summary["optimal"] == 0

    def test_equal_rewards_stay_constant(self, runner, tmp_path, out_dir):
        config = _write_config(
            tmp_path, {"bandit": {"rewards": [0.5, 0.5, 0.5], "init_policy": [0.25, 0.25, 0.5]}}
        )
        args = ["flow", "--config", config, "--out", str(out_dir), "--gate", "dg", "--max-time", "100"]
        assert runner.invoke(cli, args).exit_code == 0
        table = pd.read_csv(out_dir / "flow_dg.csv")
        for column in ("pi_0", "pi_1", "pi_2"):
            assert table[column].max() - table[column].min() < 1e-12
        assert _load(out_dir / "flow_summary.json")["result"]["gates"]["dg"]["escaped"] is False


class TestConfigErrors:
    def test_unknown_key(self, runner, tmp_path, out_dir):
        config = _write_config(tmp_path, {"unknown": 1})
        result = runner.invoke(cli, ["flow", "--config", config, "--out", str(out_dir)])
        assert result.exit_code == 1
        assert "unknown" in result.output

    def test_unknown_gate(self, runner, out_dir):
        result = runner.invoke(cli, ["flow", "--out", str(out_dir), "--gate", "ppo"])
        assert result.exit_code == 1
        assert "gates" in result.output

    def test_newer_schema(self, runner, tmp_path, out_dir):
        config = _write_config(tmp_path, {"schema_version": "2.0"})
        assert runner.invoke(cli, ["sweep", "--config", config, "--out", str(out_dir)]).exit_code == 1

    def test_start_length_mismatch(self, runner, tmp_path, out_dir):
        config = _write_config(tmp_path, {"bandit": {"rewards": [1.0, 0.5], "init_policy": [0.2, 0.3, 0.5]}})
        assert runner.invoke(cli, ["flow", "--config", config, "--out", str(out_dir)]).exit_code == 1

    def test_unknown_suite(self, runner, out_dir):
        assert runner.invoke(cli, ["verify", "--out", str(out_dir), "--suite", "bogus"]).exit_code == 1


class TestSweepCommand:
    def test_two_gaps(self, runner, tmp_path, out_dir):
        config = _write_config(tmp_path, {"gaps": [0.5, 0.2]})
        result = runner.invoke(cli, ["sweep", "--config", config, "--out", str(out_dir), "--max-time", "1e6"])
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out_dir / "sweep.csv")
        assert list(table.columns) == ["method", "gap", "inv_gap", "escape_time", "escaped"]
        assert len(table) == 4
        summary = _load(out_dir / "sweep_summary.json")["result"]
        assert set(summary["slopes"]) == {"pg", "dg"}


class TestMdpRunCommand:
    def test_random_mdp(self, runner, tmp_path, out_dir):
        config = _write_config(tmp_path, {"mdp": {"states": 3, "actions": 2, "tol": 1e-3}})
        result = runner.invoke(cli, ["mdp-run", "--config", config, "--out", str(out_dir)])
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out_dir / "mdp_run.csv")
        assert list(table.columns) == ["iteration", "objective", "delta", "d_min", "pi_opt_min"]
        summary = _load(out_dir / "mdp_run.json")["result"]
        assert summary["converged"] is True
        assert summary["telescope"]["violations"] == 0
        assert table["delta"].iloc[-1] < 1e-3

    def test_mdp_from_file(self, runner, tmp_path, out_dir):
        from src.mdp.core import TabularMdp

        mdp_path = tmp_path / "chain.json"
        mdp_path.write_text(json.dumps(TabularMdp.two_state_chain().to_json()), encoding="utf-8")
        config = _write_config(tmp_path, {"mdp": {"path": str(mdp_path), "gate": "dg", "tol": 1e-3}})
        result = runner.invoke(cli, ["mdp-run", "--config", config, "--out", str(out_dir)])
        assert result.exit_code == 0, result.output
        summary = _load(out_dir / "mdp_run.json")["result"]
        assert summary["optimal_actions"] == [1, 0]
        assert "telescope" not in summary


class TestVerifyCommand:
    def test_counterexample_suite(self, runner, out_dir):
        result = runner.invoke(cli, ["verify", "--out", str(out_dir), "--suite", "counterexample"])
        assert result.exit_code == 0, result.output
        report = _load(out_dir / "verify.json")["result"]
        assert report["failed"] == []
        assert report["counterexample"]["passed"] is True
        assert "bandit" not in report

    def test_failure_exit_code(self, runner, out_dir, monkeypatch):
        failing = SuiteReport("bandit", [CheckResult("sector_bounds", False, {"reason": "forced"})])
        monkeypatch.setattr("src.main.run_suites", lambda names, sizes, seed: [failing])
        result = runner.invoke(cli, ["verify", "--out", str(out_dir), "--suite", "bandit"])
        assert result.exit_code == 2
        assert _load(out_dir / "verify.json")["result"]["failed"] == ["bandit/sector_bounds"]


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert VERSION in result.output


class TestSectorEscapeBound:
    START = np.array([0.01, 0.005, 0.985])

    def test_bound_inside_clean_sector(self, monkeypatch, rng):
        monkeypatch.setattr("src.main.bracket_epsilon0", lambda *args, **kwargs: (0.5, None))
        b = BanditInstance(np.array([1.0, 0.9, 0.1]))
        expected = 4.0 * 3 / (0.9 * 0.015) * np.log(0.985 / 0.01)
        assert sector_escape_bound(b, self.START, 2, rng) == pytest.approx(expected)

    def test_no_bound_beyond_bracket(self, monkeypatch, rng):
        monkeypatch.setattr("src.main.bracket_epsilon0", lambda *args, **kwargs: (0.01, 0.02))
        b = BanditInstance(np.array([1.0, 0.9, 0.1]))
        assert sector_escape_bound(b, self.START, 2, rng) is None

    def test_demo_start_is_outside_sector(self, rng):
        b = BanditInstance(np.array([1.0, 0.9, 0.1]))
        assert sector_escape_bound(b, np.array([0.01, 0.05, 0.94]), 2, rng) is None

    def test_optimal_corner(self, rng):
        b = BanditInstance(np.array([1.0, 0.9, 0.1]))
        assert sector_escape_bound(b, np.array([0.98, 0.01, 0.01]), 0, rng) is None
