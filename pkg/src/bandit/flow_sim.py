"""
Forward-Euler integration of the logit gradient flow and escape detection.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import special, stats

from ..common.constants import (
    DEFAULT_DT,
    DEFAULT_MAX_TIME,
    PROB_FLOOR,
    SWEEP_COLUMNS,
)
from ..common.errors import InvalidInputError, NumericalAbortError
from .core import BanditInstance, validate_logits
from .dynamics import GateKind, GateSpec

_MAX_SURPRISAL = -math.log(PROB_FLOOR)

# Called after each step with (step, row ids, theta, pi); returns a mask of rows to stop.
StepMonitor = Callable[[int, NDArray[np.intp], NDArray[np.float64], NDArray[np.float64]], NDArray[np.bool_]]


@dataclass(frozen=True)
class FlowConfig:
    """
    Integrator settings.

    Attributes:
        dt: Euler step
        max_time: Integration horizon
        gate: Gate used for the drift
        record_every: Keep every n-th state in the trajectory
        stop_on_escape: Stop integrating once the escape criterion holds
    """

    dt: float = DEFAULT_DT
    max_time: float = DEFAULT_MAX_TIME
    gate: GateSpec = field(default_factory=GateSpec.pg)
    record_every: int = 1
    stop_on_escape: bool = True

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise InvalidInputError(f"dt must be positive, got {self.dt}")
        if not (math.isfinite(self.max_time) and self.max_time >= self.dt):
            raise InvalidInputError(f"max_time must be >= dt, got {self.max_time}")
        if self.record_every < 1:
            raise InvalidInputError(f"record_every must be >= 1, got {self.record_every}")

    @property
    def max_steps(self) -> int:
        return int(self.max_time / self.dt + 1e-9)


@dataclass
class TrajectoryRecord:
    """Recorded states of a flow or discrete run."""

    times: NDArray[np.float64]
    thetas: NDArray[np.float64]
    pis: NDArray[np.float64]
    values: NDArray[np.float64]
    escaped: bool = False
    escape_time: float | None = None
    drifts: NDArray[np.float64] | None = None
    deltas: NDArray[np.float64] | None = None
    converged: bool = False

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def final_pi(self) -> NDArray[np.float64]:
        return self.pis[-1]

    @property
    def final_delta(self) -> float | None:
        return None if self.deltas is None else float(self.deltas[-1])


@dataclass
class BatchResult:
    """Outcome of integrating many rows at once."""

    escape_step: NDArray[np.int64]
    escaped: NDArray[np.bool_]
    stopped_step: NDArray[np.int64]
    aborted: NDArray[np.bool_]
    final_theta: NDArray[np.float64]
    steps_taken: NDArray[np.int64]


def default_corner(b: BanditInstance, theta0: ArrayLike) -> int:
    """Non-optimal arm with the largest initial logit."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    masked = theta0.copy()
    masked[b.optimal] = -np.inf
    return int(np.argmax(masked))


def _fast_drift(
    rewards: NDArray[np.float64], theta: NDArray[np.float64], gate: GateSpec
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    # softmax and floored surprisal straight from the logits
    z = theta - theta.max(axis=-1, keepdims=True)
    e = np.exp(z)
    norm = e.sum(axis=-1, keepdims=True)
    pi = e / norm
    u = rewards - np.sum(pi * rewards, axis=-1, keepdims=True)
    if gate.kind is GateKind.DG:
        ell = np.minimum(np.log(norm) - z, _MAX_SURPRISAL)
        contrib = special.expit(u * ell / gate.eta) * pi * u
    elif gate.kind is GateKind.EG:
        contrib = np.where(u > 0.0, pi * u, 0.0)
    else:
        contrib = pi * u
    return contrib - pi * contrib.sum(axis=-1, keepdims=True), pi


def integrate(
    b: BanditInstance,
    theta0: ArrayLike,
    cfg: FlowConfig,
    optimal: int | None = None,
    corner: int | None = None,
) -> TrajectoryRecord:
    """
    Integrate ``theta_{n+1} = theta_n + dt * drift(theta_n)``.

    Args:
        b: Bandit instance
        theta0: Initial logits
        cfg: Integrator settings
        optimal: Arm whose logit must overtake the corner (default: best arm)
        corner: Corner arm (default: non-optimal arm with the largest initial logit)

    Returns:
        Recorded trajectory; the initial state, the escape state and the
        last state are always recorded

    Raises:
        NumericalAbortError: If the logits become non-finite
    """
    theta = np.array(validate_logits(theta0))
    if theta.shape != (b.n_arms,):
        raise InvalidInputError(f"theta0 must have shape ({b.n_arms},), got {theta.shape}")
    optimal = b.optimal if optimal is None else optimal
    corner = default_corner(b, theta) if corner is None else corner
    b.check_arm(optimal)
    b.check_arm(corner)

    times, thetas, pis, drifts = [], [], [], []
    escape_step: int | None = 0 if theta[optimal] >= theta[corner] else None
    rewards = b.rewards
    step = 0

    def record(current: NDArray[np.float64], theta_dot: NDArray[np.float64], pi: NDArray[np.float64]):
        times.append(step * cfg.dt)
        thetas.append(current.copy())
        pis.append(pi)
        drifts.append(theta_dot)

    theta_dot, pi = _fast_drift(rewards, theta, cfg.gate)
    record(theta, theta_dot, pi)
    if not (escape_step is not None and cfg.stop_on_escape):
        for step in range(1, cfg.max_steps + 1):
            theta = theta + cfg.dt * theta_dot
            if not np.all(np.isfinite(theta)):
                raise NumericalAbortError(f"non-finite logits at step {step}: {theta}", step=step)
            theta_dot, pi = _fast_drift(rewards, theta, cfg.gate)
            just_escaped = escape_step is None and theta[optimal] >= theta[corner]
            if just_escaped:
                escape_step = step
            if just_escaped or step % cfg.record_every == 0 or step == cfg.max_steps:
                record(theta, theta_dot, pi)
            if just_escaped and cfg.stop_on_escape:
                break
        if times[-1] != step * cfg.dt:
            record(theta, theta_dot, pi)

    pis_arr = np.array(pis)
    escape_time = None if escape_step is None else escape_step * cfg.dt
    logging.debug(f"Flow {cfg.gate.label}: {step} steps, escape_time={escape_time}")
    return TrajectoryRecord(
        times=np.array(times),
        thetas=np.array(thetas),
        pis=pis_arr,
        values=pis_arr @ rewards,
        escaped=escape_step is not None,
        escape_time=escape_time,
        drifts=np.array(drifts),
    )


def detect_escape(traj: TrajectoryRecord, optimal: int, corner: int) -> float | None:
    """
    First recorded time with ``theta(optimal) >= theta(corner)``.

    Returns:
        The time, or None if parity is never reached on the record
    """
    if len(traj) == 0:
        raise InvalidInputError("trajectory is empty")
    hits = np.flatnonzero(traj.thetas[:, optimal] >= traj.thetas[:, corner])
    return float(traj.times[hits[0]]) if hits.size else None


def integrate_batch(
    rewards: ArrayLike,
    theta0: ArrayLike,
    cfg: FlowConfig,
    optimal: ArrayLike,
    corner: ArrayLike,
    monitor: StepMonitor | None = None,
) -> BatchResult:
    """
    Euler-integrate many independent rows, dropping rows as they finish.

    A row finishes when it escapes, when ``monitor`` asks it to stop, or
    when its logits become non-finite (reported as aborted).

    Args:
        rewards: Rewards per row, shape ``(R, K)``
        theta0: Initial logits per row, shape ``(R, K)``
        cfg: Integrator settings
        optimal: Optimal arm per row
        corner: Corner arm per row
        monitor: Optional per-step callback

    Returns:
        Per-row outcome, ordered by row index
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    theta = np.array(theta0, dtype=np.float64)
    n_rows = theta.shape[0]
    optimal = np.broadcast_to(np.asarray(optimal, dtype=np.intp), (n_rows,))
    corner = np.broadcast_to(np.asarray(corner, dtype=np.intp), (n_rows,))

    escape_step = np.full(n_rows, -1, dtype=np.int64)
    stopped_step = np.full(n_rows, -1, dtype=np.int64)
    steps_taken = np.zeros(n_rows, dtype=np.int64)
    aborted = np.zeros(n_rows, dtype=bool)
    final_theta = theta.copy()

    rows = np.arange(n_rows)
    at_parity = theta[rows, optimal] >= theta[rows, corner]
    escape_step[at_parity] = 0
    if cfg.stop_on_escape:
        rows = rows[~at_parity]
    if monitor is not None and rows.size:
        _, pi0 = _fast_drift(rewards[rows], theta[rows], cfg.gate)
        stop = np.asarray(monitor(0, rows, theta[rows], pi0), dtype=bool)
        stopped_step[rows[stop]] = 0
        rows = rows[~stop]

    work_theta = theta[rows]
    work_rewards = rewards[rows]
    work_opt = optimal[rows]
    work_corner = corner[rows]
    local = np.arange(rows.size)

    step = 0
    for step in range(1, cfg.max_steps + 1):
        if rows.size == 0:
            break
        theta_dot, _ = _fast_drift(work_rewards, work_theta, cfg.gate)
        work_theta = work_theta + cfg.dt * theta_dot
        finite = np.all(np.isfinite(work_theta), axis=1)
        done = ~finite
        if not np.all(finite):
            aborted[rows[~finite]] = True
            logging.error(f"Non-finite logits at step {step} in rows {rows[~finite].tolist()}")
        reached = finite & (work_theta[local, work_opt] >= work_theta[local, work_corner])
        newly = reached & (escape_step[rows] < 0)
        escape_step[rows[newly]] = step
        if cfg.stop_on_escape:
            done |= reached
        if monitor is not None:
            z = work_theta - work_theta.max(axis=1, keepdims=True)
            e = np.exp(z)
            pi = e / e.sum(axis=1, keepdims=True)
            stop = np.asarray(monitor(step, rows, work_theta, pi), dtype=bool) & finite & ~done
            stopped_step[rows[stop]] = step
            done |= stop
        if np.any(done):
            finished = rows[done]
            final_theta[finished] = work_theta[done]
            steps_taken[finished] = step
            keep = ~done
            rows = rows[keep]
            work_theta = work_theta[keep]
            work_rewards = work_rewards[keep]
            work_opt = work_opt[keep]
            work_corner = work_corner[keep]
            local = np.arange(rows.size)

    if rows.size:
        final_theta[rows] = work_theta
        steps_taken[rows] = step
    return BatchResult(
        escape_step=escape_step,
        escaped=escape_step >= 0,
        stopped_step=stopped_step,
        aborted=aborted,
        final_theta=final_theta,
        steps_taken=steps_taken,
    )


def gap_sweep(
    gaps: Sequence[float],
    theta0: ArrayLike,
    gates: Sequence[GateSpec],
    cfg: FlowConfig,
) -> pd.DataFrame:
    """
    Escape time against the optimality gap for each gate.

    Each row uses rewards ``(1, 1 - gap, 0)``; escape means arm 0's logit
    overtakes arm 1's.

    Args:
        gaps: Gap values in (0, 1)
        theta0: Shared initial logits
        gates: Gates to compare
        cfg: Integrator settings (its gate is ignored)

    Returns:
        Table with columns method, gap, inv_gap, escape_time, escaped
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    if gaps.size == 0 or np.any(gaps <= 0.0) or np.any(gaps >= 1.0):
        raise InvalidInputError(f"gaps must lie in (0, 1), got {gaps.tolist()}")
    rewards = np.stack([BanditInstance.from_gap(g).rewards for g in gaps])
    theta = np.tile(np.asarray(theta0, dtype=np.float64), (gaps.size, 1))

    records = []
    for gate in gates:
        logging.info(f"Gap sweep: {gate.label} over {gaps.size} gaps, max_time={cfg.max_time:g}")
        row_cfg = FlowConfig(dt=cfg.dt, max_time=cfg.max_time, gate=gate, stop_on_escape=True)
        result = integrate_batch(rewards, theta, row_cfg, optimal=0, corner=1)
        for i, g in enumerate(gaps):
            if result.aborted[i]:
                logging.error(f"Gap sweep row {gate.label}/{g:g} aborted at step {result.steps_taken[i]}")
            escaped = bool(result.escaped[i])
            records.append(
                {
                    "method": gate.label,
                    "gap": float(g),
                    "inv_gap": 1.0 / float(g),
                    "escape_time": float(result.escape_step[i]) * cfg.dt if escaped else np.nan,
                    "escaped": escaped,
                }
            )
    return pd.DataFrame.from_records(records, columns=list(SWEEP_COLUMNS))


def escape_scaling_exponent(table: pd.DataFrame, method: str, last_n: int | None = None) -> float:
    """
    Log-log slope of escape time against ``1/gap`` for one method.

    Args:
        table: Output of :func:`gap_sweep`
        method: Method label
        last_n: Use only the ``last_n`` smallest escaped gaps

    Returns:
        Fitted exponent, NaN when fewer than two rows escaped
    """
    rows = table[(table["method"] == method) & table["escaped"]].sort_values("inv_gap")
    rows = rows[rows["escape_time"] > 0]
    if last_n is not None:
        rows = rows.tail(last_n)
    if len(rows) < 2:
        return float("nan")
    fit = stats.linregress(np.log(rows["inv_gap"]), np.log(rows["escape_time"]))
    return float(fit.slope)
