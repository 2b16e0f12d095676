"""
Tests for the Euler integrator, escape detection and the gap sweep.
"""

import numpy as np
import pandas as pd
import pytest

from src.bandit.core import BanditInstance
from src.bandit.dynamics import GateSpec
from src.bandit.flow_sim import (
    FlowConfig,
    default_corner,
    detect_escape,
    escape_scaling_exponent,
    gap_sweep,
    integrate,
    integrate_batch,
)
from src.common.constants import DEFAULT_GAPS, DEFAULT_INIT_LOGITS, SWEEP_COLUMNS
from src.common.errors import InvalidInputError

THETA0 = np.array(DEFAULT_INIT_LOGITS)


class TestFlowConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [{"dt": 0.0}, {"dt": -1.0}, {"dt": 1.0, "max_time": 0.5}, {"record_every": 0}, {"dt": float("nan")}],
    )
    def test_invalid_settings(self, kwargs):
        with pytest.raises(InvalidInputError):
            FlowConfig(**kwargs)

    def test_max_steps(self):
        assert FlowConfig(dt=0.1, max_time=1.0).max_steps == 10


class TestIntegrate:
    def test_equal_rewards_stay_put(self):
        b = BanditInstance(np.array([0.5, 0.5, 0.5]))
        theta0 = np.log(np.array([0.25, 0.25, 0.5]))
        traj = integrate(b, theta0, FlowConfig(dt=1.0, max_time=50.0))
        assert not traj.escaped
        assert traj.escape_time is None
        np.testing.assert_allclose(traj.thetas, np.tile(theta0, (len(traj), 1)))
        assert traj.times[-1] == 50.0

    def test_start_at_parity_escapes_immediately(self):
        b = BanditInstance.from_gap(0.5)
        traj = integrate(b, np.array([5.0, 1.0, 0.0]), FlowConfig(dt=1.0, max_time=100.0))
        assert traj.escaped
        assert traj.escape_time == 0.0
        assert len(traj) == 1

    @pytest.mark.parametrize("gate", [GateSpec.pg(), GateSpec.eg(), GateSpec.dg(1.0)])
    def test_escape_time_matches_record(self, gate):
        b = BanditInstance.from_gap(0.5)
        traj = integrate(b, THETA0, FlowConfig(dt=1.0, max_time=1e6, gate=gate, record_every=100))
        assert traj.escaped
        # the escape state is always recorded
        assert detect_escape(traj, 0, 1) == traj.escape_time
        assert traj.escape_time == float(int(traj.escape_time))

    def test_value_column(self, demo_bandit):
        traj = integrate(demo_bandit, THETA0, FlowConfig(dt=0.5, max_time=20.0, stop_on_escape=False))
        np.testing.assert_allclose(traj.values, traj.pis @ demo_bandit.rewards)
        np.testing.assert_allclose(traj.pis.sum(axis=1), 1.0)

    def test_record_every_thins_trajectory(self, demo_bandit):
        cfg = FlowConfig(dt=1.0, max_time=100.0, record_every=10, stop_on_escape=False)
        traj = integrate(demo_bandit, np.array([-5.0, 5.0, 0.0]), cfg)
        assert traj.times.tolist() == [float(t) for t in range(0, 101, 10)]

    def test_shape_checked(self, demo_bandit):
        with pytest.raises(InvalidInputError):
            integrate(demo_bandit, np.zeros(4), FlowConfig())

    def test_default_corner(self, demo_bandit):
        assert default_corner(demo_bandit, np.array([10.0, 1.0, 2.0])) == 2

    def test_pg_lingers_near_runner_up_from_bad_start(self, demo_bandit, demo_policy):
        theta0 = np.log(demo_policy)
        times = {}
        for gate in (GateSpec.pg(), GateSpec.eg(), GateSpec.dg(1.0)):
            cfg = FlowConfig(dt=1.0, max_time=1e5, gate=gate, record_every=1000)
            traj = integrate(demo_bandit, theta0, cfg, optimal=0, corner=1)
            assert traj.escaped
            times[gate.label] = traj.escape_time
        # thousands of unit steps for PG, a few hundred for the gated flows
        assert 1000.0 < times["pg"] < 10_000.0
        assert times["eg"] < times["pg"] / 3.0
        assert times["dg"] < times["pg"] / 3.0


class TestIntegrateBatch:
    def test_matches_single_runs(self):
        gaps = [0.5, 0.2]
        rewards = np.stack([BanditInstance.from_gap(g).rewards for g in gaps])
        theta = np.tile(THETA0, (2, 1))
        for gate in (GateSpec.pg(), GateSpec.dg(1.0)):
            cfg = FlowConfig(dt=1.0, max_time=1e6, gate=gate)
            batch = integrate_batch(rewards, theta, cfg, optimal=0, corner=1)
            for i, g in enumerate(gaps):
                single = integrate(BanditInstance.from_gap(g), THETA0, cfg, optimal=0, corner=1)
                assert batch.escaped[i] == single.escaped
                if single.escaped:
                    assert abs(batch.escape_step[i] * cfg.dt - single.escape_time) <= cfg.dt

    def test_monitor_stops_rows(self):
        rewards = np.tile(BanditInstance.from_gap(0.1).rewards, (3, 1))
        theta = np.tile(THETA0, (3, 1))

        def monitor(step, rows, theta, pi):
            return np.full(rows.size, step == 3)

        result = integrate_batch(rewards, theta, FlowConfig(dt=1.0, max_time=100.0), 0, 1, monitor=monitor)
        assert result.stopped_step.tolist() == [3, 3, 3]
        assert result.steps_taken.tolist() == [3, 3, 3]
        assert not result.escaped.any()

    def test_parity_rows_need_no_steps(self):
        rewards = np.tile(BanditInstance.from_gap(0.1).rewards, (2, 1))
        theta = np.array([[2.0, 1.0, 0.0], THETA0])
        result = integrate_batch(rewards, theta, FlowConfig(dt=1.0, max_time=10.0), 0, 1)
        assert result.escape_step[0] == 0
        assert result.steps_taken[0] == 0
        np.testing.assert_array_equal(result.final_theta[0], theta[0])


class TestGapSweep:
    def test_table_layout(self):
        table = gap_sweep([0.5, 0.2], THETA0, [GateSpec.pg(), GateSpec.dg(1.0)], FlowConfig(dt=1.0, max_time=1e6))
        assert tuple(table.columns) == SWEEP_COLUMNS
        assert len(table) == 4
        assert table["method"].tolist() == ["pg", "pg", "dg", "dg"]
        np.testing.assert_allclose(table["inv_gap"], 1.0 / table["gap"])

    def test_unescaped_rows_are_nan(self):
        table = gap_sweep([0.1], THETA0, [GateSpec.pg()], FlowConfig(dt=1.0, max_time=2.0))
        assert not table["escaped"].any()
        assert table["escape_time"].isna().all()

    def test_invalid_gaps(self):
        with pytest.raises(InvalidInputError):
            gap_sweep([0.5, 1.0], THETA0, [GateSpec.pg()], FlowConfig())

    def test_scaling_exponent(self):
        inv = np.array([2.0, 5.0, 10.0, 20.0, 50.0])
        table = pd.DataFrame(
            {"method": "pg", "gap": 1 / inv, "inv_gap": inv, "escape_time": 3.0 * inv**2, "escaped": True}
        )
        assert escape_scaling_exponent(table, "pg") == pytest.approx(2.0)
        assert escape_scaling_exponent(table, "pg", last_n=2) == pytest.approx(2.0)
        assert np.isnan(escape_scaling_exponent(table, "dg"))

    @pytest.mark.slow
    def test_dg_escapes_faster_than_pg(self):
        gates = [GateSpec.pg(), GateSpec.dg(1.0)]
        table = gap_sweep(DEFAULT_GAPS, THETA0, gates, FlowConfig(dt=1.0, max_time=1e7))
        assert table["escaped"].all()
        pg = table[table["method"] == "pg"].sort_values("gap", ascending=False)
        dg = table[table["method"] == "dg"].sort_values("gap", ascending=False)
        assert np.all(np.diff(pg["escape_time"].to_numpy()) > 0)
        assert escape_scaling_exponent(table, "pg", last_n=4) > 1.5
        assert escape_scaling_exponent(table, "dg", last_n=4) <= 1.3
        assert np.all(dg["escape_time"].to_numpy() <= pg["escape_time"].to_numpy())
