"""
Gate weights and continuous-time logit drifts for PG, EG and DG.

The drift of every gate has the form ``theta_dot(a) = pi(a) [w(a) U(a) - S]``
with ``S = sum_a w(a) pi(a) U(a)``. Functions named ``*_from_advantages``
work on raw advantage arrays so the MDP code can reuse them per state.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from ..common.errors import DegeneratePairError, InvalidInputError, UnsupportedError
from .core import BanditInstance, advantages, ordering, softmax, surprisal, validate_policy


class GateKind(str, Enum):
    PG = "pg"
    EG = "eg"
    DG = "dg"


@dataclass(frozen=True)
class GateSpec:
    """
    Gate selection.

    Attributes:
        kind: Which gate
        eta: Temperature, only read for DG
    """

    kind: GateKind
    eta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GateKind(self.kind))
        if self.kind is GateKind.DG and not (np.isfinite(self.eta) and self.eta > 0.0):
            raise InvalidInputError(f"DG temperature must be positive, got {self.eta}")

    @classmethod
    def pg(cls) -> "GateSpec":
        return cls(GateKind.PG)

    @classmethod
    def eg(cls) -> "GateSpec":
        return cls(GateKind.EG)

    @classmethod
    def dg(cls, eta: float = 1.0) -> "GateSpec":
        return cls(GateKind.DG, eta)

    @classmethod
    def parse(cls, name: str, eta: float = 1.0) -> "GateSpec":
        """Build a gate from its CLI name (``pg``, ``eg`` or ``dg``)."""
        try:
            kind = GateKind(name.strip().lower())
        except ValueError:
            raise InvalidInputError(f"unknown gate '{name}', expected one of pg, eg, dg")
        return cls(kind, eta)

    @property
    def label(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class LogitGapDecomposition:
    """``theta_dot(a) - theta_dot(b)`` split into its direct and indirect parts."""

    direct: float | NDArray[np.float64]
    indirect: float | NDArray[np.float64]
    weighted_drift_S: float | NDArray[np.float64]
    total: float | NDArray[np.float64]


def weights_from_advantages(u: ArrayLike, pi: ArrayLike, gate: GateSpec) -> NDArray[np.float64]:
    """
    Per-arm gate weights given advantages and the policy.

    Args:
        u: Advantages, shape ``(..., K)``
        pi: Policy, same shape
        gate: Gate selection

    Returns:
        PG: ones; EG: ``1{U > 0}``; DG: ``sigmoid(U * surprisal / eta)``
    """
    u = np.asarray(u, dtype=np.float64)
    if gate.kind is GateKind.PG:
        return np.ones_like(u)
    if gate.kind is GateKind.EG:
        return (u > 0.0).astype(np.float64)
    return special.expit(u * surprisal(pi) / gate.eta)


def drift_from_advantages(u: ArrayLike, pi: ArrayLike, gate: GateSpec) -> NDArray[np.float64]:
    """Gated drift ``pi(a) [w(a) U(a) - S]`` along the last axis."""
    u = np.asarray(u, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    contrib = weights_from_advantages(u, pi, gate) * pi * u
    total = contrib.sum(axis=-1, keepdims=True)
    return contrib - pi * total


def gate_weights(b: BanditInstance, pi: ArrayLike, g: GateSpec) -> NDArray[np.float64]:
    """
    Gate weights for a bandit policy.

    Args:
        b: Bandit instance
        pi: Policy of shape ``(..., K)``
        g: Gate selection

    Returns:
        Weight per arm
    """
    pi = validate_policy(pi, b.n_arms)
    return weights_from_advantages(advantages(b, pi), pi, g)


def weighted_drift(b: BanditInstance, pi: ArrayLike, g: GateSpec) -> NDArray[np.float64] | float:
    """Population drift ``S = sum_a w(a) pi(a) U(a)``."""
    pi = validate_policy(pi, b.n_arms)
    u = advantages(b, pi)
    s = np.sum(weights_from_advantages(u, pi, g) * pi * u, axis=-1)
    return float(s) if np.ndim(s) == 0 else s


def drift_at_policy(b: BanditInstance, pi: ArrayLike, g: GateSpec) -> NDArray[np.float64]:
    """Logit drift evaluated directly at a policy."""
    pi = validate_policy(pi, b.n_arms)
    return drift_from_advantages(advantages(b, pi), pi, g)


def drift(b: BanditInstance, theta: ArrayLike, g: GateSpec) -> NDArray[np.float64]:
    """
    Logit drift ``d theta / dt`` under gate ``g``.

    Args:
        b: Bandit instance
        theta: Logits of shape ``(..., K)``
        g: Gate selection

    Returns:
        Drift vector of the same shape

    Raises:
        InvalidInputError: If any logit is not finite
    """
    return drift_at_policy(b, softmax(theta), g)


def drift_summed_form(b: BanditInstance, pi: ArrayLike, g: GateSpec) -> NDArray[np.float64]:
    """Drift written as ``sum_a' w pi U (1{a = a'} - pi(a))``, term by term."""
    pi = validate_policy(pi, b.n_arms)
    u = advantages(b, pi)
    contrib = weights_from_advantages(u, pi, g) * pi * u
    k = b.n_arms
    # jacobian[..., a', a] = 1{a = a'} - pi(a)
    jacobian = np.eye(k) - pi[..., None, :]
    return np.einsum("...j,...ja->...a", contrib, jacobian)


def logit_gap_at_policy(
    b: BanditInstance, pi: ArrayLike, g: GateSpec, a: int, b_arm: int
) -> LogitGapDecomposition:
    """
    Split ``theta_dot(a) - theta_dot(b_arm)`` at a policy.

    Args:
        b: Bandit instance
        pi: Policy of shape ``(..., K)``
        g: Gate selection
        a: First arm
        b_arm: Second arm

    Returns:
        Decomposition; fields are arrays when ``pi`` is batched

    Raises:
        DegeneratePairError: If ``a == b_arm``
    """
    b.check_arm(a)
    b.check_arm(b_arm)
    if a == b_arm:
        raise DegeneratePairError(f"logit gap needs two distinct arms, got {a} twice")
    pi = validate_policy(pi, b.n_arms)
    u = advantages(b, pi)
    contrib = weights_from_advantages(u, pi, g) * pi * u
    s = contrib.sum(axis=-1)
    direct = contrib[..., a] - contrib[..., b_arm]
    indirect = (pi[..., b_arm] - pi[..., a]) * s
    theta_dot = drift_from_advantages(u, pi, g)
    total = theta_dot[..., a] - theta_dot[..., b_arm]
    if np.ndim(total) == 0:
        return LogitGapDecomposition(float(direct), float(indirect), float(s), float(total))
    return LogitGapDecomposition(direct, indirect, s, total)


def logit_gap(
    b: BanditInstance, theta: ArrayLike, g: GateSpec, a: int, b_arm: int
) -> LogitGapDecomposition:
    """Logit-gap decomposition at the softmax image of ``theta``."""
    return logit_gap_at_policy(b, softmax(theta), g, a, b_arm)


def corner_dominance_gap(
    b: BanditInstance, pi: ArrayLike, g: GateSpec, optimal: int, corner: int
) -> NDArray[np.float64] | float:
    """``theta_dot(optimal) - theta_dot(corner)``; positive means the optimal arm gains."""
    return logit_gap_at_policy(b, pi, g, optimal, corner).total


def pg_bad_region_test(b: BanditInstance, pi: ArrayLike) -> bool | NDArray[np.bool_]:
    """
    Closed-form PG bad-region test for three arms.

    Arms are ranked by reward; the point is bad when
    ``pi(best) / pi(worst) < (r2 - r3) / (2 (r1 - r2))``.

    Args:
        b: Three-arm bandit instance
        pi: Policy of shape ``(..., 3)``

    Returns:
        True where the ratio condition fails

    Raises:
        UnsupportedError: If K != 3
    """
    if b.n_arms != 3:
        raise UnsupportedError(f"closed-form bad-region test needs K=3, got K={b.n_arms}")
    pi = validate_policy(pi, 3)
    best, second, worst = ordering(b)
    r = b.rewards
    top_gap = r[best] - r[second]
    low_gap = r[second] - r[worst]
    with np.errstate(divide="ignore"):
        threshold = low_gap / (2.0 * top_gap) if top_gap > 0.0 else np.inf
        ratio = pi[..., best] / pi[..., worst]
    result = ratio < threshold
    return bool(result) if np.ndim(result) == 0 else result
