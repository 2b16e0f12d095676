"""
Tests for the sector bounds, suppression, bad-region maps, rate fits and escape-time checks.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from src.bandit.core import BanditInstance
from src.bandit.dynamics import GateSpec, drift_at_policy
from src.common.errors import InsufficientDataError, InvalidInputError
from src.verify.theory import (
    bracket_epsilon0,
    check_dg_sector_bound,
    check_eg_sector_bound,
    check_escape_time_bound,
    check_poly_suppression,
    check_poly_suppression_random,
    check_sector_monotonicity,
    fit_rate,
    in_sector,
    map_bad_region,
    sample_sector,
    simplex_grid,
    suppression_margins,
)

SHELLS = (0.001, 0.003, 0.01, 0.03, 0.1, 0.2, 0.3, 0.4)


class TestSector:
    def test_samples_lie_in_sector(self, demo_bandit, rng):
        pis = sample_sector(demo_bandit, 1, 0.05, 500, rng)
        assert pis.shape == (500, 3)
        np.testing.assert_allclose(pis[:, 1], 0.95)
        assert np.all(pis[:, 0] >= 0.05 / 3)
        assert np.all(in_sector(pis, 0, 1, 0.5))

    def test_in_sector_excludes_vertex(self):
        assert not in_sector(np.array([0.0, 1.0, 0.0]), 0, 1, 0.5)

    @pytest.mark.parametrize("corner", [1, 2])
    def test_eg_bound_on_demo(self, demo_bandit, rng, corner):
        report = check_eg_sector_bound(demo_bandit, corner, SHELLS, 2000, rng)
        assert report.passed
        assert report.eps_bracket[0] is not None
        assert report.n_points == 2000 * len(SHELLS)

    @pytest.mark.parametrize("corner", [1, 2])
    def test_dg_bound_on_demo(self, demo_bandit, rng, corner):
        report = check_dg_sector_bound(demo_bandit, corner, 1.0, SHELLS, 2000, rng)
        assert report.passed

    def test_shells_outside_range_are_skipped(self, demo_bandit, rng):
        report = check_eg_sector_bound(demo_bandit, 1, [0.6, 0.8], 100, rng)
        assert report.n_skipped == 2
        assert report.eps_bracket == (None, None)
        assert not report.passed

    def test_optimal_corner_rejected(self, demo_bandit, rng):
        with pytest.raises(InvalidInputError):
            check_eg_sector_bound(demo_bandit, 0, SHELLS, 10, rng)

    @pytest.mark.parametrize(
        "gate,eps,bound",
        [(GateSpec.eg(), 0.01, 0.9 * 0.01 / 12.0), (GateSpec.dg(1.0), 0.001, 0.9 * 0.001 / 24.0)],
        ids=["eg", "dg"],
    )
    def test_gap_at_sector_boundary(self, demo_bandit, gate, eps, bound):
        # optimal arm at the sector floor eps / K, the rest of eps on the runner-up
        pi = np.array([eps / 3.0 + 1e-12, 2.0 * eps / 3.0 - 1e-12, 1.0 - eps])
        assert in_sector(pi, 0, 2, 0.5)
        theta_dot = drift_at_policy(demo_bandit, pi, gate)
        assert theta_dot[0] - theta_dot[2] >= bound
        assert bound == pytest.approx(7.5e-4 if eps == 0.01 else 3.75e-5)

    def test_report_serialises(self, demo_bandit, rng):
        data = check_eg_sector_bound(demo_bandit, 2, [0.01, 0.1], 50, rng).to_dict()
        assert data["passed"] is True
        assert len(data["shells"]) == 2

    def test_bracket_epsilon0(self, demo_bandit, rng):
        clean, first_bad = bracket_epsilon0(demo_bandit, 1, GateSpec.eg(), rng, n_samples=500, iterations=8)
        assert clean is not None
        if first_bad is not None:
            assert clean < first_bad

    @pytest.mark.parametrize("corner", [1, 2])
    def test_monotonicity_on_demo(self, demo_bandit, rng, corner):
        report = check_sector_monotonicity(demo_bandit, corner, SHELLS[:4], 2000, rng)
        assert report.passed


class TestSuppression:
    @settings(max_examples=200, deadline=None)
    @given(
        log_pi=st.floats(-27.0, 0.0),
        u=st.floats(-1.0, -1e-9),
        eta=st.floats(1e-3, 10.0),
    )
    def test_margin_is_nonnegative(self, log_pi, u, eta):
        assert suppression_margins(np.exp(log_pi), u, eta) >= -1e-12

    def test_single_harmful_arm(self):
        weight = special.expit(-0.4 * np.log(100.0))
        assert weight == pytest.approx(0.1367, abs=1e-4)
        assert 0.01**0.4 == pytest.approx(0.1585, abs=1e-4)
        margin = suppression_margins(0.01, -0.4, 1.0)
        assert margin == pytest.approx(np.log(0.01**0.4) - np.log(weight))
        assert margin > 0.0

    def test_demo_policy(self, demo_bandit, demo_policy):
        report = check_poly_suppression(demo_bandit, demo_policy, 1.0)
        assert report.passed
        assert report.n_checked == 1

    def test_corner_condition_checked(self, demo_bandit):
        pi = np.array([0.001, 0.998, 0.001])
        report = check_poly_suppression(demo_bandit, pi, 0.5)
        assert report.n_corner_checked == 1
        assert report.passed

    def test_needs_negative_advantage(self):
        b = BanditInstance(np.array([0.5, 0.5]))
        with pytest.raises(InvalidInputError):
            check_poly_suppression(b, np.array([0.5, 0.5]), 1.0)

    def test_random_triples(self, rng):
        report = check_poly_suppression_random(100_000, rng)
        assert report.passed
        assert report.n_checked == 100_000


class TestBadRegion:
    def test_grid_cells(self):
        grid = simplex_grid(4)
        assert grid.shape == (16, 3)
        np.testing.assert_allclose(grid.sum(axis=1), 1.0)
        assert np.all(grid > 0.0)
        assert len({tuple(np.round(p, 12)) for p in grid}) == 16

    def test_demo_runner_up_corner(self, demo_bandit):
        pg = map_bad_region(demo_bandit, GateSpec.pg(), 1).shell_fractions
        eg = map_bad_region(demo_bandit, GateSpec.eg(), 1).shell_fractions
        dg = map_bad_region(demo_bandit, GateSpec.dg(1.0), 1)
        assert pg[0.01] > 0.05
        assert eg[0.001] < 0.005
        assert eg[0.1] >= 10.0 * eg[0.001]
        assert dg.shell_fractions[0.001] <= dg.shell_fractions[0.1]
        assert dg.delta_eta == pytest.approx(0.4)

    def test_frame_layout(self, demo_bandit):
        region = map_bad_region(demo_bandit, GateSpec.eg(), 2, grid_resolution=20)
        frame = region.to_frame()
        assert list(frame.columns) == ["pi_0", "pi_1", "pi_2", "label"]
        assert len(frame) == 400
        assert set(frame["label"]) <= {"good", "bad"}
        assert region.to_dict()["n_cells"] == 400

    def test_more_arms_need_rng(self):
        b = BanditInstance(np.array([0.9, 0.6, 0.3, 0.1]))
        with pytest.raises(InvalidInputError):
            map_bad_region(b, GateSpec.eg(), 1, grid_resolution=20)

    def test_more_arms_sampled(self, rng):
        b = BanditInstance(np.array([0.9, 0.6, 0.3, 0.1]))
        region = map_bad_region(b, GateSpec.pg(), 1, grid_resolution=20, rng=rng)
        assert region.points.shape == (400, 4)
        assert 0.0 <= region.overall_fraction <= 1.0


class TestFitRate:
    def test_reciprocal_series(self):
        t = np.arange(200)
        fit = fit_rate(1.0 / (3.0 * t + 5.0))
        assert fit.slope == pytest.approx(3.0, rel=1e-9)
        assert fit.intercept == pytest.approx(5.0, rel=1e-6)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.t0_estimate == 0
        assert not fit.super_reciprocal

    def test_geometric_series_is_super_reciprocal(self):
        fit = fit_rate(np.exp(-0.1 * np.arange(100)))
        assert fit.super_reciprocal

    def test_short_series(self):
        with pytest.raises(InsufficientDataError):
            fit_rate(np.ones(30))

    def test_non_positive_series(self):
        deltas = np.ones(60)
        deltas[-1] = 0.0
        with pytest.raises(InvalidInputError):
            fit_rate(deltas)


class TestEscapeTimeBound:
    def test_demo_worst_corner(self, demo_bandit, rng):
        report = check_escape_time_bound(demo_bandit, 2, 10, rng, samples_per_eps=1000)
        assert report.passed
        assert report.n_starts == 10
        assert sum(v for k, v in report.exit_reasons.items() if k != "aborted") == 10

    def test_explicit_eps_bar(self, demo_bandit, rng):
        report = check_escape_time_bound(demo_bandit, 2, 5, rng, eps_bar=0.1)
        assert report.eps_bar == 0.1
        assert report.exit_reasons["horizon"] == 0

    @pytest.mark.slow
    @pytest.mark.parametrize("corner", [1, 2])
    def test_demo_fifty_starts(self, demo_bandit, rng, corner):
        report = check_escape_time_bound(demo_bandit, corner, 50, rng)
        assert report.passed
