"""
Bandit instances, the softmax map, values, advantages and arm classification.

Every function accepts batched arrays with arms on the last axis, so a
stack of policies of shape ``(..., K)`` can be processed in one call.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import special

from ..common.constants import PROB_FLOOR, SIMPLEX_TOL
from ..common.errors import InvalidInputError

Logits = NDArray[np.float64]
PolicySimplex = NDArray[np.float64]


def _as_finite(values: ArrayLike, name: str) -> NDArray[np.float64]:
    array = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(array)):
        raise InvalidInputError(f"{name} must be finite, got {array}")
    return array


@dataclass(frozen=True, eq=False)
class BanditInstance:
    """
    A K-armed bandit with a fixed reward vector.

    Rewards are stored in the order given; use :func:`ordering` for the
    decreasing-reward permutation.

    Attributes:
        rewards: Reward per arm, shape ``(K,)``
        distinct: Require pairwise distinct rewards
    """

    rewards: NDArray[np.float64]
    distinct: bool = False
    _sorted: NDArray[np.float64] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rewards = np.array(_as_finite(self.rewards, "rewards"), copy=True)
        if rewards.ndim != 1 or rewards.size < 2:
            raise InvalidInputError(f"need a vector of at least 2 rewards, got shape {rewards.shape}")
        if np.any(rewards < 0.0) or np.any(rewards > 1.0):
            logging.warning(f"Rewards outside [0, 1]: {rewards.tolist()}")
        if self.distinct and np.unique(rewards).size != rewards.size:
            raise InvalidInputError(f"rewards must be pairwise distinct: {rewards.tolist()}")
        rewards.setflags(write=False)
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "_sorted", np.sort(rewards)[::-1])

    @classmethod
    def from_gap(cls, gap: float) -> "BanditInstance":
        """
        Three-arm instance with rewards ``(1, 1 - gap, 0)`` used by the gap sweep.

        Args:
            gap: Optimality gap in (0, 1)

        Raises:
            InvalidInputError: If the gap is outside (0, 1)
        """
        if not 0.0 < gap < 1.0:
            raise InvalidInputError(f"gap must lie in (0, 1), got {gap}")
        return cls(np.array([1.0, 1.0 - gap, 0.0]), distinct=True)

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        n_arms: int,
        distinct: bool = True,
        min_gap: float = 0.0,
    ) -> "BanditInstance":
        """
        Draw rewards uniformly from [0, 1].

        Args:
            rng: Random generator
            n_arms: Number of arms
            distinct: Require distinct rewards
            min_gap: Minimum spacing between consecutive sorted rewards

        Returns:
            A new instance; redrawn until the spacing constraint holds
        """
        if n_arms < 2:
            raise InvalidInputError(f"n_arms must be >= 2, got {n_arms}")
        if min_gap * (n_arms - 1) >= 1.0:
            raise InvalidInputError(f"min_gap {min_gap} is infeasible for {n_arms} arms")
        while True:
            rewards = rng.uniform(0.0, 1.0, size=n_arms)
            spacing = np.diff(np.sort(rewards))
            if np.all(spacing > min_gap) and (not distinct or np.all(spacing > 0.0)):
                return cls(rewards, distinct=distinct)

    @property
    def n_arms(self) -> int:
        return int(self.rewards.size)

    @property
    def optimal(self) -> int:
        """Index of the best arm (first maximiser)."""
        return int(np.argmax(self.rewards))

    @property
    def optimal_value(self) -> float:
        return float(self._sorted[0])

    @property
    def optimality_gap(self) -> float:
        """Gap between the best and the second-best reward."""
        return float(self._sorted[0] - self._sorted[1])

    @property
    def reward_range(self) -> float:
        return float(self._sorted[0] - self._sorted[-1])

    def gap(self, a: int, b: int) -> float:
        """Pairwise gap ``r(a) - r(b)``."""
        self.check_arm(a)
        self.check_arm(b)
        return float(self.rewards[a] - self.rewards[b])

    def check_arm(self, arm: int) -> None:
        if not 0 <= arm < self.n_arms:
            raise InvalidInputError(f"arm index {arm} out of range for K={self.n_arms}")


@dataclass(frozen=True)
class ArmClassification:
    """Partition of the arms relative to a corner arm."""

    corner: int
    allies: frozenset[int]
    harmful: frozenset[int]
    epsilon: float


def softmax(theta: ArrayLike) -> PolicySimplex:
    """
    Map logits to the probability simplex along the last axis.

    Args:
        theta: Logits of shape ``(..., K)``

    Returns:
        Policy of the same shape

    Raises:
        InvalidInputError: If any logit is not finite
    """
    theta = _as_finite(theta, "logits")
    return special.softmax(theta, axis=-1)


def validate_policy(pi: ArrayLike, n_arms: int | None = None) -> PolicySimplex:
    """
    Check that ``pi`` lies on the simplex along its last axis.

    Raises:
        InvalidInputError: On negative entries, wrong width or bad row sums
    """
    pi = _as_finite(pi, "policy")
    if n_arms is not None and pi.shape[-1] != n_arms:
        raise InvalidInputError(f"policy has {pi.shape[-1]} arms, expected {n_arms}")
    if np.any(pi < 0.0):
        raise InvalidInputError("policy has negative entries")
    if np.any(np.abs(pi.sum(axis=-1) - 1.0) > 1e3 * SIMPLEX_TOL):
        raise InvalidInputError("policy rows do not sum to 1")
    return pi


def surprisal(pi: ArrayLike) -> NDArray[np.float64]:
    """Information content ``-log max(pi, floor)`` of each arm."""
    return -np.log(np.maximum(np.asarray(pi, dtype=np.float64), PROB_FLOOR))


def reward_advantages(rewards: ArrayLike, pi: ArrayLike) -> NDArray[np.float64]:
    """Advantages for raw reward arrays; broadcasts over leading axes."""
    rewards = np.asarray(rewards, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    baseline = np.sum(pi * rewards, axis=-1, keepdims=True)
    return rewards - baseline


def expected_value(b: BanditInstance, pi: ArrayLike) -> NDArray[np.float64] | float:
    """Expected reward ``pi^T r``."""
    value = np.sum(np.asarray(pi, dtype=np.float64) * b.rewards, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def advantages(b: BanditInstance, pi: ArrayLike) -> NDArray[np.float64]:
    """
    Centered advantages ``U(a) = r(a) - pi^T r``.

    Args:
        b: Bandit instance
        pi: Policy of shape ``(..., K)``

    Returns:
        Advantages with ``sum_a pi(a) U(a) = 0``
    """
    pi = validate_policy(pi, b.n_arms)
    return reward_advantages(b.rewards, pi)


def classify_arms(b: BanditInstance, pi: ArrayLike, corner: int) -> ArmClassification:
    """
    Split the arms into allies and harmful arms relative to ``corner``.

    Args:
        b: Bandit instance
        pi: Single policy of shape ``(K,)``
        corner: Index of the corner arm

    Returns:
        Classification with ``epsilon = 1 - pi(corner)``

    Raises:
        InvalidInputError: If the corner index is out of range
    """
    b.check_arm(corner)
    pi = validate_policy(pi, b.n_arms)
    reference = b.rewards[corner]
    allies = frozenset(int(i) for i in np.flatnonzero(b.rewards > reference))
    harmful = frozenset(int(i) for i in np.flatnonzero(b.rewards < reference))
    return ArmClassification(
        corner=corner,
        allies=allies,
        harmful=harmful,
        epsilon=float(1.0 - pi[corner]),
    )


def ordering(b: BanditInstance) -> NDArray[np.intp]:
    """Arm indices sorted by decreasing reward (stable for ties)."""
    return np.argsort(-b.rewards, kind="stable")


def policy_logits(pi: ArrayLike) -> Logits:
    """Logits whose softmax is ``pi``: ``log max(pi, floor)``."""
    return -surprisal(pi)


def validate_logits(theta: ArrayLike) -> Logits:
    """Return ``theta`` as a float array, rejecting non-finite entries."""
    return _as_finite(theta, "logits")


def sample_corner_policies(
    rng: np.random.Generator,
    n_arms: int,
    corner: int,
    epsilon: float,
    n_samples: int,
) -> PolicySimplex:
    """
    Policies with ``pi(corner) = 1 - epsilon``.

    The remaining mass is split over the other arms by a flat Dirichlet draw.

    Returns:
        Array of shape ``(n_samples, n_arms)``
    """
    if not 0.0 < epsilon < 1.0:
        raise InvalidInputError(f"epsilon must lie in (0, 1), got {epsilon}")
    if not 0 <= corner < n_arms:
        raise InvalidInputError(f"corner {corner} out of range for K={n_arms}")
    if n_arms == 2:
        others = np.full((n_samples, 1), epsilon)
    else:
        others = rng.dirichlet(np.ones(n_arms - 1), size=n_samples) * epsilon
    return np.insert(others, corner, 1.0 - epsilon, axis=1)
