"""
Exponentiated discrete updates and their improvement identities.

Both updates are multiplicative, ``pi'(a) ∝ pi(a) exp(step * f(a))``, and
are applied in logit space then re-normalised. Each step reports the
value change computed directly and through the closed-form progress
expression so the two can be compared.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import partial

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from ..common.constants import DEFAULT_MAX_ITERS, DEFAULT_TOL
from ..common.errors import InvalidInputError
from .core import (
    BanditInstance,
    advantages,
    policy_logits,
    surprisal,
    validate_policy,
)
from .flow_sim import TrajectoryRecord


@dataclass(frozen=True)
class StepReport:
    """Result of one discrete update."""

    pi_next: NDArray[np.float64]
    value_delta: float | NDArray[np.float64]
    progress_formula: float | NDArray[np.float64]
    partition_Z: float | NDArray[np.float64]


@dataclass(frozen=True)
class TelescopeReport:
    """Per-step check of ``delta_t - delta_{t+1} >= c * delta_t^2``."""

    constant: float
    n_checked: int
    n_violations: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


Stepper = Callable[[BanditInstance, NDArray[np.float64]], StepReport]


def _scalar(x: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(x) if np.ndim(x) == 0 else x


def _positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0.0):
        raise InvalidInputError(f"{name} must be positive, got {value}")


def _multiplicative_step(
    b: BanditInstance, pi: NDArray[np.float64], exponent: NDArray[np.float64], u: NDArray[np.float64]
) -> StepReport:
    # shifted so exp never overflows; zero-mass arms stay at zero
    shift = np.max(np.where(pi > 0.0, exponent, -np.inf), axis=-1, keepdims=True)
    weighted = pi * np.exp(exponent - shift)
    z_shifted = np.sum(weighted, axis=-1, keepdims=True)
    pi_next = weighted / z_shifted
    z = (z_shifted * np.exp(shift))[..., 0]
    value_delta = np.sum((pi_next - pi) * b.rewards, axis=-1)
    progress = np.sum(pi * u * np.expm1(exponent), axis=-1) / z
    return StepReport(pi_next, _scalar(value_delta), _scalar(progress), _scalar(z))


def eg_step(b: BanditInstance, pi: ArrayLike, eta_step: float) -> StepReport:
    """
    Exponentiated update on the positive part of the advantages.

    Args:
        b: Bandit instance
        pi: Current policy, shape ``(..., K)``
        eta_step: Step size

    Returns:
        Step report with ``f = max(U, 0)``
    """
    _positive("eta_step", eta_step)
    pi = validate_policy(pi, b.n_arms)
    u = advantages(b, pi)
    return _multiplicative_step(b, pi, eta_step * np.maximum(u, 0.0), u)


def dg_step(b: BanditInstance, pi: ArrayLike, alpha: float, eta: float) -> StepReport:
    """
    Exponentiated update with the sigmoid delight gate.

    Args:
        b: Bandit instance
        pi: Current policy, shape ``(..., K)``
        alpha: Step size
        eta: Gate temperature

    Returns:
        Step report with exponent ``alpha * w * U``
    """
    _positive("alpha", alpha)
    _positive("eta", eta)
    pi = validate_policy(pi, b.n_arms)
    u = advantages(b, pi)
    w = special.expit(u * surprisal(pi) / eta)
    return _multiplicative_step(b, pi, alpha * w * u, u)


def make_eg_stepper(eta: float) -> Stepper:
    _positive("eta", eta)
    return partial(eg_step, eta_step=eta)


def make_dg_stepper(alpha: float, eta: float) -> Stepper:
    _positive("alpha", alpha)
    _positive("eta", eta)
    return partial(dg_step, alpha=alpha, eta=eta)


def run_to_convergence(
    b: BanditInstance,
    pi0: ArrayLike,
    stepper: Stepper,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> TrajectoryRecord:
    """
    Iterate ``stepper`` until the suboptimality ``V* - V_t`` drops below ``tol``.

    Running out of iterations is not an error; the record's ``converged``
    flag is False and ``final_delta`` holds the last gap.

    Args:
        b: Bandit instance with distinct rewards
        pi0: Initial policy
        stepper: One-step update, e.g. from :func:`make_eg_stepper`
        tol: Stopping threshold on the suboptimality
        max_iters: Iteration budget

    Returns:
        Trajectory indexed by iteration, with ``deltas`` filled in

    Raises:
        InvalidInputError: If rewards are tied
    """
    if np.unique(b.rewards).size != b.n_arms:
        raise InvalidInputError("convergence runs need pairwise distinct rewards")
    pi = validate_policy(pi0, b.n_arms)
    v_star = b.optimal_value

    pis = [pi]
    values = [float(pi @ b.rewards)]
    converged = v_star - values[0] < tol
    it = 0
    while not converged and it < max_iters:
        pi = stepper(b, pi).pi_next
        it += 1
        pis.append(pi)
        values.append(float(pi @ b.rewards))
        converged = v_star - values[-1] < tol

    pis_arr = np.array(pis)
    values_arr = np.array(values)
    if converged:
        logging.debug(f"Converged after {it} iterations")
    else:
        logging.warning(f"No convergence within {max_iters} iterations, delta={v_star - values_arr[-1]:.3e}")
    return TrajectoryRecord(
        times=np.arange(it + 1, dtype=np.float64),
        thetas=policy_logits(pis_arr),
        pis=pis_arr,
        values=values_arr,
        deltas=v_star - values_arr,
        converged=bool(converged),
    )


def telescope_constant_eg(eta: float, reward_range: float) -> float:
    """``eta / (2 e^{eta R})``."""
    return eta / (2.0 * math.exp(eta * reward_range))


def telescope_constant_dg(alpha: float, reward_range: float) -> float:
    """``alpha / (8 e^{alpha R})``."""
    return alpha / (8.0 * math.exp(alpha * reward_range))


def check_reciprocal_telescope(
    deltas: ArrayLike, pi_opt: ArrayLike, constant: float | ArrayLike, slack: float = 1e-15
) -> TelescopeReport:
    """
    Count steps where ``delta_t - delta_{t+1} < c * delta_t^2``.

    Only steps with ``pi_t(opt) >= 1/2`` are checked.

    Args:
        deltas: Suboptimality series
        pi_opt: Probability of the optimal arm at each step
        constant: The constant ``c``, or one value per step transition
        slack: Absolute floating-point allowance

    Returns:
        Counts and the worst margin (lhs - rhs) over checked steps
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    pi_opt = np.asarray(pi_opt, dtype=np.float64)
    if deltas.shape != pi_opt.shape or deltas.ndim != 1 or deltas.size < 2:
        raise InvalidInputError("deltas and pi_opt must be series of the same length >= 2")
    c = np.broadcast_to(np.asarray(constant, dtype=np.float64), deltas[:-1].shape)
    mask = pi_opt[:-1] >= 0.5
    margin = (deltas[:-1] - deltas[1:]) - c * deltas[:-1] ** 2
    checked = margin[mask]
    return TelescopeReport(
        constant=float(c[mask].min()) if checked.size else float(c.min()),
        n_checked=int(checked.size),
        n_violations=int(np.sum(checked < -slack)),
        worst_margin=float(checked.min()) if checked.size else float("inf"),
    )


def limit_support_violations(
    b: BanditInstance, pi: ArrayLike, mass_tol: float = 1e-6, adv_tol: float = 1e-4
) -> list[int]:
    """
    Arms that keep mass at a limit policy without zero advantage.

    Returns:
        Indices with ``pi(i) > mass_tol`` and ``|U(i)| >= adv_tol``
    """
    pi = validate_policy(pi, b.n_arms)
    u = advantages(b, pi)
    return [int(i) for i in np.flatnonzero((pi > mass_tol) & (np.abs(u) >= adv_tol))]
