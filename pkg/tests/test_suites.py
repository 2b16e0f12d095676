"""
Tests for the verification batteries at reduced sample counts.
"""

import json

import pytest
from pydantic import ValidationError

from src.verify.suites import (
    SUITES,
    BatterySizes,
    SuiteReport,
    run_bandit_suite,
    run_counterexample_suite,
    run_mdp_suite,
    run_suites,
)


@pytest.fixture
def small_sizes():
    return BatterySizes(
        identity_inputs=500,
        sector_instances=2,
        sector_samples=1000,
        suppression_triples=10_000,
        region_resolution=400,
        escape_starts=5,
        step_bandits=50,
        step_mdps=20,
        convergence_bandits=2,
        convergence_mdps=1,
        pdl_pairs=30,
        local_escape_samples=500,
    )


class TestBatterySizes:
    def test_unknown_key_rejected(self):
        with pytest.raises(ValidationError):
            BatterySizes(samples=3)

    def test_resolution_floor(self):
        with pytest.raises(ValidationError):
            BatterySizes(region_resolution=5)


class TestCounterexampleSuite:
    def test_all_checks_pass(self):
        report = run_counterexample_suite()
        assert report.passed, report.failed()
        names = [c.name for c in report.checks]
        assert names == ["fixed_points", "closed_forms", "shared_flows", "sign_conflict_ablation"]

    def test_report_is_json_ready(self):
        data = run_counterexample_suite().to_dict()
        json.dumps(data)
        assert data["passed"] is True
        assert "seconds" not in json.dumps(data)

    def test_claims_are_plain_booleans(self):
        report = run_counterexample_suite()
        for check in report.checks:
            for name, value in check.details.get("claims", {}).items():
                assert type(value) is bool, name


class TestBanditSuite:
    def test_small_battery_passes(self, small_sizes):
        report = run_bandit_suite(small_sizes, seed=0)
        assert report.passed, report.failed()
        assert len(report.checks) == 8

    @pytest.mark.slow
    def test_full_battery_passes(self):
        assert run_bandit_suite(seed=0).passed


class TestMdpSuite:
    def test_battery_without_long_runs_passes(self, small_sizes):
        sizes = small_sizes.model_copy(update={"convergence_mdps": 0, "step_mdps": 10})
        report = run_mdp_suite(sizes, seed=0)
        assert report.passed, report.failed()
        names = [c.name for c in report.checks]
        assert names == [
            "performance_difference",
            "policy_evaluation",
            "discrete_monotonicity",
            "global_convergence",
            "local_escape",
        ]
        escape = report.to_dict()["checks"]["local_escape"]
        assert escape["mdp0/eg"]["fractions"]["0.001"] <= 0.01
        json.dumps(report.to_dict())

    @pytest.mark.slow
    def test_small_battery_passes(self, small_sizes):
        report = run_mdp_suite(small_sizes, seed=0)
        assert report.passed, report.failed()

    @pytest.mark.slow
    def test_full_battery_passes(self):
        assert run_mdp_suite(seed=0).passed


class TestRunSuites:
    def test_fixed_order(self, monkeypatch):
        calls = []

        def fake(name):
            def run(sizes, seed):
                calls.append(name)
                return SuiteReport(name)

            return run

        for name in SUITES:
            monkeypatch.setitem(SUITES, name, fake(name))
        reports = run_suites(["counterexample", "bandit"])
        assert calls == ["bandit", "counterexample"]
        assert [r.suite for r in reports] == ["bandit", "counterexample"]

    def test_failed_names(self):
        report = SuiteReport("demo")
        assert report.passed
        assert report.failed() == []
