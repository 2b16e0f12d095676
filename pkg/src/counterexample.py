"""
Shared-parameter two-state MDP where the delight gate has a spurious fixed point.

Both states share one logit ``theta`` with ``p = sigmoid(theta)`` the
probability of action ``a1``. State ``s1`` rewards ``a1`` with +10 and state
``s2`` punishes it with -100; ``a0`` pays 0 everywhere. The drift of
``theta`` is the branch-weighted sum of per-state gated advantage sums.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, special

from .bandit.dynamics import GateKind, GateSpec, weights_from_advantages
from .common.constants import (
    COUNTEREXAMPLE_COLUMNS,
    COUNTEREXAMPLE_GRID,
    COUNTEREXAMPLE_P_RANGE,
    COUNTEREXAMPLE_ROOT_TOL,
    DG_TEMPERATURE_SWEEP,
    FINITE_DIFF_STEP,
)
from .common.errors import InvalidInputError, NumericalAbortError


@dataclass(frozen=True)
class SharedParamInstance:
    """
    Rewards of the two-state instance.

    Attributes:
        r_s1_a1: Reward of ``a1`` in ``s1``
        r_s2_a1: Reward of ``a1`` in ``s2``
        r_a0: Reward of ``a0`` in both states
        branch: Probability of landing in ``s1``
        custom: Must be set to change any of the values above
    """

    r_s1_a1: float = 10.0
    r_s2_a1: float = -100.0
    r_a0: float = 0.0
    branch: float = 0.5
    custom: bool = False

    def __post_init__(self):
        if not self.custom and self.values != (10.0, -100.0, 0.0, 0.5):
            raise InvalidInputError("overriding the instance rewards requires custom=True")
        if not 0.0 < self.branch < 1.0:
            raise InvalidInputError(f"branch probability must lie in (0, 1), got {self.branch}")

    @property
    def values(self) -> tuple[float, float, float, float]:
        return (self.r_s1_a1, self.r_s2_a1, self.r_a0, self.branch)

    def state_rewards(self) -> NDArray[np.float64]:
        """Rewards as a ``(2, 2)`` array indexed ``[state, action]`` with actions ``(a0, a1)``."""
        return np.array([[self.r_a0, self.r_s1_a1], [self.r_a0, self.r_s2_a1]])


DEFAULT_INSTANCE = SharedParamInstance()


@dataclass
class FixedPointReport:
    """Interior zeros of the shared-logit drift and their stability."""

    method: str
    eta: float | None
    roots: list[float] = field(default_factory=list)
    derivatives: list[float] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)

    @property
    def stability(self) -> list[str]:
        return ["stable" if d < 0.0 else "unstable" for d in self.derivatives]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "eta": self.eta,
            "roots": self.roots,
            "derivatives": self.derivatives,
            "residuals": self.residuals,
            "stability": self.stability,
        }


def _check_p(p: ArrayLike) -> NDArray[np.float64]:
    p = np.asarray(p, dtype=np.float64)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise InvalidInputError("p must lie strictly inside (0, 1)")
    return p


def _scalar(x: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(x) if np.ndim(x) == 0 else x


def drift_from_state_sums(
    p: ArrayLike, gate: GateSpec, instance: SharedParamInstance = DEFAULT_INSTANCE
) -> float | NDArray[np.float64]:
    """
    Shared-logit drift built from per-state gated advantage sums.

    ``G_s = sum_a w(s, a) pi(a) U(s, a) d log pi(a) / d theta`` with score
    derivatives ``-p`` for ``a0`` and ``1 - p`` for ``a1``; the drift is
    ``branch * G_s1 + (1 - branch) * G_s2``.

    Args:
        p: Probability of ``a1``, scalar or array in (0, 1)
        gate: Gate selection
        instance: Reward configuration

    Returns:
        Drift of ``theta`` at each ``p``
    """
    p = _check_p(p)
    pi = np.stack([1.0 - p, p], axis=-1)[..., None, :]  # (..., 1, 2), same in both states
    rewards = instance.state_rewards()
    u = rewards - np.sum(pi * rewards, axis=-1, keepdims=True)
    w = weights_from_advantages(u, np.broadcast_to(pi, u.shape), gate)
    score = np.stack([-p, 1.0 - p], axis=-1)[..., None, :]
    g = np.sum(w * pi * u * score, axis=-1)
    total = instance.branch * g[..., 0] + (1.0 - instance.branch) * g[..., 1]
    return _scalar(total)


def f_pg(p: ArrayLike) -> float | NDArray[np.float64]:
    """Closed-form PG drift ``-45 p (1 - p)``."""
    p = _check_p(p)
    return _scalar(-45.0 * p * (1.0 - p))


def f_eg(p: ArrayLike) -> float | NDArray[np.float64]:
    """Closed-form EG drift ``5 p (1 - p) (1 - 11 p)``."""
    p = _check_p(p)
    return _scalar(5.0 * p * (1.0 - p) * (1.0 - 11.0 * p))


def f_eg_prime(p: ArrayLike) -> float | NDArray[np.float64]:
    """Derivative of :func:`f_eg` in ``p``."""
    p = _check_p(p)
    return _scalar(5.0 * (1.0 - 24.0 * p + 33.0 * p**2))


def f_dg(p: ArrayLike, eta: float = 1.0) -> float | NDArray[np.float64]:
    """
    DG drift at temperature ``eta``.

    Per-state advantages are ``U(s1, a1) = 10 (1 - p)``, ``U(s1, a0) = -10 p``,
    ``U(s2, a1) = -100 (1 - p)`` and ``U(s2, a0) = 100 p``; each is gated
    by ``sigmoid(U * (-log pi(a)) / eta)``.
    """
    return drift_from_state_sums(p, GateSpec.dg(eta))


def drift_function(gate: GateSpec, instance: SharedParamInstance = DEFAULT_INSTANCE):
    """The drift ``F(p)`` for ``gate``, closed form where one exists."""
    if instance.custom:
        return lambda p: drift_from_state_sums(p, gate, instance)
    if gate.kind is GateKind.PG:
        return f_pg
    if gate.kind is GateKind.EG:
        return f_eg
    return lambda p: f_dg(p, gate.eta)


def find_fixed_points(
    gate: GateSpec,
    instance: SharedParamInstance = DEFAULT_INSTANCE,
    n_grid: int = COUNTEREXAMPLE_GRID,
    p_range: tuple[float, float] = COUNTEREXAMPLE_P_RANGE,
) -> FixedPointReport:
    """
    Locate interior zeros of ``F`` and classify their stability.

    Sign changes on an evenly spaced grid are refined with Brent's method.
    A root is stable when ``F'(p*) < 0``; the derivative is analytic for EG
    on the default instance and a central difference otherwise.

    Args:
        gate: Gate selection
        instance: Reward configuration
        n_grid: Grid points in ``p_range``
        p_range: Search interval

    Returns:
        Report with roots in increasing order; empty when F keeps its sign
    """
    f = drift_function(gate, instance)
    grid = np.linspace(p_range[0], p_range[1], n_grid)
    values = np.asarray(f(grid))
    report = FixedPointReport(method=gate.label, eta=gate.eta if gate.kind is GateKind.DG else None)

    brackets = []
    for i in np.flatnonzero(values[:-1] * values[1:] <= 0.0):
        if values[i] == 0.0:
            if not brackets or brackets[-1] != (grid[i], grid[i]):
                brackets.append((grid[i], grid[i]))
        elif values[i + 1] != 0.0:
            brackets.append((grid[i], grid[i + 1]))
    if values[-1] == 0.0:
        brackets.append((grid[-1], grid[-1]))

    for lo, hi in brackets:
        root = lo if lo == hi else optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        residual = abs(float(f(root)))
        if residual >= COUNTEREXAMPLE_ROOT_TOL:
            raise NumericalAbortError(f"root refinement stalled at p={root} with |F|={residual:.2e}")
        if gate.kind is GateKind.EG and not instance.custom:
            slope = float(f_eg_prime(root))
        else:
            h = FINITE_DIFF_STEP
            slope = (float(f(root + h)) - float(f(root - h))) / (2.0 * h)
        report.roots.append(float(root))
        report.derivatives.append(slope)
        report.residuals.append(residual)

    logging.info(f"Fixed points for {gate.label}: {report.roots} ({report.stability})")
    return report


@dataclass(frozen=True)
class SharedFlowResult:
    times: NDArray[np.float64]
    thetas: NDArray[np.float64]

    @property
    def ps(self) -> NDArray[np.float64]:
        return special.expit(self.thetas)

    @property
    def final_p(self) -> NDArray[np.float64]:
        return self.ps[-1]

    def first_time_below(self, threshold: float) -> NDArray[np.float64]:
        """First recorded time with ``p < threshold`` per start, NaN if never."""
        below = self.ps < threshold
        hit = below.any(axis=0)
        first = np.argmax(below, axis=0)
        return np.where(hit, self.times[first], np.nan)


def integrate_shared_flow(
    gate: GateSpec,
    theta0: ArrayLike,
    dt: float = 0.01,
    max_time: float = 100.0,
    instance: SharedParamInstance = DEFAULT_INSTANCE,
    record_every: int = 10,
) -> SharedFlowResult:
    """
    Euler-integrate ``d theta / dt = F(sigmoid(theta))`` from one or more starts.

    Returns:
        Recorded times and logits, shape ``(n_records, n_starts)``
    """
    if dt <= 0.0 or max_time <= 0.0:
        raise InvalidInputError("dt and max_time must be positive")
    f = drift_function(gate, instance)
    theta = np.atleast_1d(np.array(theta0, dtype=np.float64))
    n_steps = int(math.ceil(max_time / dt))
    times = [0.0]
    thetas = [theta.copy()]
    for step in range(1, n_steps + 1):
        p = special.expit(theta)
        # the domain check rejects p rounded to exactly 0 or 1
        p = np.clip(p, 1e-300, 1.0 - 1e-16)
        theta = theta + dt * np.asarray(f(p))
        if not np.all(np.isfinite(theta)):
            raise NumericalAbortError(f"shared flow diverged at step {step}", step=step)
        if step % record_every == 0 or step == n_steps:
            times.append(step * dt)
            thetas.append(theta.copy())
    return SharedFlowResult(np.array(times), np.array(thetas))


def sweep_dg_temperatures(etas: Sequence[float] = DG_TEMPERATURE_SWEEP) -> dict[float, FixedPointReport]:
    """DG fixed points for each temperature in ``etas``."""
    return {float(eta): find_fixed_points(GateSpec.dg(eta)) for eta in etas}


def sign_conflict_ablation(r_s2_a1: float = 100.0) -> FixedPointReport:
    """EG fixed points once ``a1`` is also rewarded in ``s2``."""
    instance = SharedParamInstance(r_s2_a1=r_s2_a1, custom=True)
    return find_fixed_points(GateSpec.eg(), instance)


def drift_grid(
    n_grid: int = COUNTEREXAMPLE_GRID,
    eta: float = 1.0,
    p_range: tuple[float, float] = COUNTEREXAMPLE_P_RANGE,
) -> pd.DataFrame:
    """The three drift curves on an evenly spaced grid of ``p``."""
    p = np.linspace(p_range[0], p_range[1], n_grid)
    return pd.DataFrame(dict(zip(COUNTEREXAMPLE_COLUMNS, (p, f_pg(p), f_eg(p), f_dg(p, eta)), strict=True)))
