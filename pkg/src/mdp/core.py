"""
Tabular MDPs: exact evaluation, per-state exponentiated updates and oracles.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, ValidationError
from scipy import linalg, special

from ..bandit.core import policy_logits, sample_corner_policies, softmax, surprisal
from ..bandit.discrete_update import TelescopeReport, check_reciprocal_telescope
from ..bandit.dynamics import GateSpec, drift_from_advantages
from ..common.constants import (
    BELLMAN_TOL,
    CORNER_DEPTH,
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    OPTIMAL_MARGIN,
    REPORT_SCHEMA_VERSION,
    SIMPLEX_TOL,
)
from ..common.errors import InvalidInputError, NumericalAbortError, PreconditionError
from ..common.utils import load_json_file
from ..common.version import check_schema_version


class MdpDocument(BaseModel):
    """JSON layout of an MDP instance."""

    model_config = ConfigDict(extra="forbid")

    schema_version: str | None = None
    n_states: int
    n_actions: int
    gamma: float
    rho: list[float]
    rewards: list[list[float]]
    transitions: list[list[list[float]]]


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """
    Finite discounted MDP ``(S, A, P, r, gamma, rho)``.

    Attributes:
        transitions: ``P[s, a, s']``
        rewards: ``r[s, a]``
        gamma: Discount in [0, 1)
        rho: Initial state distribution
    """

    transitions: NDArray[np.float64]
    rewards: NDArray[np.float64]
    gamma: float
    rho: NDArray[np.float64]

    def __post_init__(self):
        p = np.array(self.transitions, dtype=np.float64)
        r = np.array(self.rewards, dtype=np.float64)
        rho = np.array(self.rho, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or r.shape != p.shape[:2] or rho.shape != (p.shape[0],):
            raise InvalidInputError(
                f"inconsistent shapes: transitions {p.shape}, rewards {r.shape}, rho {rho.shape}"
            )
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(r)) and np.all(np.isfinite(rho))):
            raise InvalidInputError("MDP arrays must be finite")
        if np.any(p < 0.0) or np.any(np.abs(p.sum(axis=2) - 1.0) > SIMPLEX_TOL):
            raise InvalidInputError("every P(.|s,a) must be a probability vector")
        if np.any(rho < 0.0) or abs(rho.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidInputError("rho must be a probability vector")
        if not 0.0 <= self.gamma < 1.0:
            raise InvalidInputError(f"gamma must lie in [0, 1), got {self.gamma}")
        if np.any(r < 0.0) or np.any(r > 1.0):
            logging.warning("MDP rewards outside [0, 1]")
        for array in (p, r, rho):
            array.setflags(write=False)
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def n_states(self) -> int:
        return int(self.rewards.shape[0])

    @property
    def n_actions(self) -> int:
        return int(self.rewards.shape[1])

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.rewards)))

    @classmethod
    def from_json(cls, source: Path | dict[str, Any]) -> "TabularMdp":
        """
        Load and validate an MDP document.

        Args:
            source: Path to a JSON file or an already parsed document

        Raises:
            InvalidInputError: If the document is missing, malformed or violates an invariant
        """
        document = load_json_file(Path(source)) if not isinstance(source, dict) else source
        if document is None:
            raise InvalidInputError(f"cannot read MDP document {source}")
        if not isinstance(document, dict):
            raise InvalidInputError(f"MDP document {source} must hold a JSON object")
        check_schema_version(document, source="MDP document")
        try:
            parsed = MdpDocument.model_validate(document)
        except ValidationError as e:
            raise InvalidInputError(f"invalid MDP document: {e}")
        p = np.asarray(parsed.transitions, dtype=np.float64)
        if p.shape != (parsed.n_states, parsed.n_actions, parsed.n_states):
            raise InvalidInputError(
                f"transitions have shape {p.shape}, expected "
                f"({parsed.n_states}, {parsed.n_actions}, {parsed.n_states})"
            )
        return cls(p, np.asarray(parsed.rewards), parsed.gamma, np.asarray(parsed.rho))

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.gamma,
            "rho": self.rho.tolist(),
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def random(
        cls,
        rng: np.random.Generator,
        n_states: int,
        n_actions: int,
        gamma: float = 0.9,
        min_margin: float | None = None,
        max_tries: int = 1000,
    ) -> "TabularMdp":
        """
        Random MDP with Dirichlet transitions, uniform rewards and uniform rho.

        Args:
            rng: Random generator
            n_states: Number of states
            n_actions: Number of actions
            gamma: Discount
            min_margin: If set, redraw until every optimal action wins by this margin
            max_tries: Redraw budget

        Raises:
            PreconditionError: If no draw meets ``min_margin`` within ``max_tries``
        """
        for _ in range(max_tries):
            p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
            r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
            mdp = cls(p, r, gamma, np.full(n_states, 1.0 / n_states))
            if min_margin is None:
                return mdp
            if np.all(solve_optimal(mdp, margin=0.0).margins >= min_margin):
                return mdp
        raise PreconditionError(f"no random MDP with optimal-action margin >= {min_margin} in {max_tries} draws")

    @classmethod
    def product_of_bandits(cls, rewards: ArrayLike, rho: ArrayLike | None = None) -> "TabularMdp":
        """Myopic MDP (gamma = 0): each state is an independent bandit."""
        r = np.asarray(rewards, dtype=np.float64)
        n_states = r.shape[0]
        rho = np.full(n_states, 1.0 / n_states) if rho is None else np.asarray(rho, dtype=np.float64)
        p = np.broadcast_to(rho, (n_states, r.shape[1], n_states)).copy()
        return cls(p, r, 0.0, rho)

    @classmethod
    def two_state_chain(cls, gamma: float = 0.9) -> "TabularMdp":
        """
        Two states, actions ``stay`` (0) and ``move`` (1).

        Only staying in state 1 pays reward 1; starting in state 0 the
        improving action is ``move``.
        """
        p = np.zeros((2, 2, 2))
        p[0, 0, 0] = p[0, 1, 1] = 1.0
        p[1, 0, 1] = p[1, 1, 0] = 1.0
        r = np.array([[0.0, 0.0], [1.0, 0.0]])
        return cls(p, r, gamma, np.array([1.0, 0.0]))


@dataclass(frozen=True, eq=False)
class MdpPolicy:
    """Softmax policy with one logit row per state."""

    logits: NDArray[np.float64]
    pis: NDArray[np.float64] = field(init=False, repr=False)

    def __post_init__(self):
        logits = np.array(self.logits, dtype=np.float64)
        if logits.ndim != 2:
            raise InvalidInputError(f"policy logits must be S x A, got shape {logits.shape}")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "pis", softmax(logits))

    @classmethod
    def uniform(cls, m: TabularMdp) -> "MdpPolicy":
        return cls(np.zeros((m.n_states, m.n_actions)))

    @classmethod
    def corner(cls, m: TabularMdp, actions: ArrayLike, depth: float = CORNER_DEPTH) -> "MdpPolicy":
        """Logits 0 everywhere except ``depth`` on ``actions[s]`` at each state."""
        actions = np.asarray(actions, dtype=np.intp)
        if actions.shape != (m.n_states,) or np.any(actions < 0) or np.any(actions >= m.n_actions):
            raise InvalidInputError(f"corner actions must be one valid action per state, got {actions}")
        logits = np.zeros((m.n_states, m.n_actions))
        logits[np.arange(m.n_states), actions] = depth
        return cls(logits)

    @classmethod
    def from_pis(cls, pis: ArrayLike) -> "MdpPolicy":
        return cls(policy_logits(pis))


@dataclass(frozen=True)
class EvalResult:
    """Exact evaluation of a policy."""

    V: NDArray[np.float64]
    Q: NDArray[np.float64]
    U: NDArray[np.float64]
    d_rho: NDArray[np.float64]
    objective: float


@dataclass(frozen=True)
class MdpStepResult:
    policy: MdpPolicy
    value_delta: float
    progress_formula: float
    before: EvalResult
    after: EvalResult


@dataclass(frozen=True)
class OptimalSolution:
    """Optimal values and the greedy optimal action per state."""

    V: NDArray[np.float64]
    Q: NDArray[np.float64]
    actions: NDArray[np.intp]
    margins: NDArray[np.float64]


@dataclass
class MdpTrajectory:
    """Per-iteration record of an MDP convergence run."""

    objectives: NDArray[np.float64]
    deltas: NDArray[np.float64]
    d_min: NDArray[np.float64]
    pi_opt_min: NDArray[np.float64]
    final_policy: MdpPolicy
    optimal: OptimalSolution
    converged: bool
    max_tv: float

    @property
    def iterations(self) -> int:
        return int(self.deltas.size - 1)


MdpStepper = Callable[[TabularMdp, MdpPolicy, EvalResult | None], MdpStepResult]


def _policy_matrices(m: TabularMdp, pis: NDArray[np.float64]) -> tuple[NDArray, NDArray]:
    p_pi = np.einsum("sa,sat->st", pis, m.transitions)
    r_pi = np.sum(pis * m.rewards, axis=1)
    return p_pi, r_pi


def policy_eval(m: TabularMdp, pol: MdpPolicy) -> EvalResult:
    """
    Evaluate a policy exactly with a dense linear solve.

    Args:
        m: MDP
        pol: Policy

    Returns:
        Values, action values, advantages and the discounted visitation

    Raises:
        NumericalAbortError: If the linear system cannot be solved
    """
    if pol.pis.shape != m.rewards.shape:
        raise InvalidInputError(f"policy shape {pol.pis.shape} does not match MDP {m.rewards.shape}")
    p_pi, r_pi = _policy_matrices(m, pol.pis)
    system = np.eye(m.n_states) - m.gamma * p_pi
    try:
        v = linalg.solve(system, r_pi)
        occupancy = linalg.solve(system.T, m.rho)
    except linalg.LinAlgError as e:
        raise NumericalAbortError(f"policy evaluation failed: {e}")
    q = m.rewards + m.gamma * m.transitions @ v
    u = q - v[:, None]
    d_rho = (1.0 - m.gamma) * occupancy
    return EvalResult(V=v, Q=q, U=u, d_rho=d_rho, objective=float(m.rho @ v))


def iterative_policy_evaluation(m: TabularMdp, pol: MdpPolicy, n_iters: int = 10_000) -> NDArray[np.float64]:
    """Truncated value iteration ``V <- r_pi + gamma P_pi V`` from zero."""
    p_pi, r_pi = _policy_matrices(m, pol.pis)
    v = np.zeros(m.n_states)
    for _ in range(n_iters):
        v = r_pi + m.gamma * p_pi @ v
    return v


def solve_optimal(m: TabularMdp, margin: float = OPTIMAL_MARGIN) -> OptimalSolution:
    """
    Optimal policy by exact policy iteration.

    Args:
        m: MDP
        margin: Required gap between the best and second-best optimal action values

    Returns:
        Optimal values and actions with per-state margins

    Raises:
        PreconditionError: If some state's optimal action is not unique to ``margin``
    """
    states = np.arange(m.n_states)
    actions = np.zeros(m.n_states, dtype=np.intp)
    for _ in range(10 * m.n_states * m.n_actions + 10):
        pis = np.zeros(m.rewards.shape)
        pis[states, actions] = 1.0
        p_pi, r_pi = _policy_matrices(m, pis)
        v = linalg.solve(np.eye(m.n_states) - m.gamma * p_pi, r_pi)
        q = m.rewards + m.gamma * m.transitions @ v
        greedy = np.argmax(q, axis=1)
        # keep the current action on ties to avoid cycling
        improved = q[states, greedy] > q[states, actions] + 1e-12
        if not np.any(improved):
            break
        actions = np.where(improved, greedy, actions)
    else:
        logging.warning("Policy iteration hit its iteration cap")

    if m.n_actions == 1:
        margins = np.full(m.n_states, np.inf)
    else:
        top_two = np.sort(q, axis=1)[:, -2:]
        margins = top_two[:, 1] - top_two[:, 0]
    bad = np.flatnonzero(margins < margin)
    if bad.size:
        state = int(bad[0])
        raise PreconditionError(
            f"optimal action at state {state} is not unique (margin {margins[state]:.3e} < {margin:.1e})",
            state=state,
        )
    return OptimalSolution(V=v, Q=q, actions=actions, margins=margins)


def _exponentiated_step(
    m: TabularMdp, pol: MdpPolicy, exponent: NDArray[np.float64], current: EvalResult
) -> MdpStepResult:
    new_policy = MdpPolicy(pol.logits + exponent)
    after = policy_eval(m, new_policy)
    pi = pol.pis
    z = np.sum(pi * np.exp(exponent), axis=1)
    per_state = np.sum(pi * current.U * np.expm1(exponent), axis=1) / z
    progress = float(after.d_rho @ per_state) / (1.0 - m.gamma)
    return MdpStepResult(
        policy=new_policy,
        value_delta=after.objective - current.objective,
        progress_formula=progress,
        before=current,
        after=after,
    )


def eg_mdp_step(
    m: TabularMdp, pol: MdpPolicy, eta: float, current: EvalResult | None = None
) -> MdpStepResult:
    """
    Per-state exponentiated update on ``[U(s, a)]_+``.

    Args:
        m: MDP
        pol: Current policy
        eta: Step size
        current: Evaluation of ``pol`` if already available

    Returns:
        New policy, the value change from two evaluations and the
        visitation-weighted progress expression
    """
    if not (math.isfinite(eta) and eta > 0.0):
        raise InvalidInputError(f"eta must be positive, got {eta}")
    current = policy_eval(m, pol) if current is None else current
    return _exponentiated_step(m, pol, eta * np.maximum(current.U, 0.0), current)


def dg_mdp_step(
    m: TabularMdp, pol: MdpPolicy, alpha: float, eta: float, current: EvalResult | None = None
) -> MdpStepResult:
    """Per-state exponentiated update with exponent ``alpha * w(s, a) * U(s, a)``."""
    if not (math.isfinite(alpha) and alpha > 0.0 and math.isfinite(eta) and eta > 0.0):
        raise InvalidInputError(f"alpha and eta must be positive, got {alpha}, {eta}")
    current = policy_eval(m, pol) if current is None else current
    w = special.expit(current.U * surprisal(pol.pis) / eta)
    return _exponentiated_step(m, pol, alpha * w * current.U, current)


def make_eg_mdp_stepper(eta: float) -> MdpStepper:
    return partial(_call_eg, eta=eta)


def make_dg_mdp_stepper(alpha: float, eta: float) -> MdpStepper:
    return partial(_call_dg, alpha=alpha, eta=eta)


def _call_eg(m: TabularMdp, pol: MdpPolicy, current: EvalResult | None, eta: float) -> MdpStepResult:
    return eg_mdp_step(m, pol, eta, current)


def _call_dg(
    m: TabularMdp, pol: MdpPolicy, current: EvalResult | None, alpha: float, eta: float
) -> MdpStepResult:
    return dg_mdp_step(m, pol, alpha, eta, current)


def pdl_check(m: TabularMdp, pol: MdpPolicy, pol_next: MdpPolicy) -> float:
    """
    Residual of the performance difference identity.

    Compares ``V(pi') - V(pi)`` with
    ``1/(1 - gamma) * sum_s d'(s) sum_a pi'(a|s) U(s, a)``.
    """
    before = policy_eval(m, pol)
    after = policy_eval(m, pol_next)
    rhs = float(after.d_rho @ np.sum(pol_next.pis * before.U, axis=1)) / (1.0 - m.gamma)
    return abs((after.objective - before.objective) - rhs)


def total_variation_to(pol: MdpPolicy, actions: NDArray[np.intp]) -> NDArray[np.float64]:
    """Per-state total variation distance to the deterministic policy ``actions``."""
    return 1.0 - pol.pis[np.arange(pol.pis.shape[0]), actions]


def run_mdp_to_convergence(
    m: TabularMdp,
    pol0: MdpPolicy,
    stepper: MdpStepper,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> MdpTrajectory:
    """
    Iterate ``stepper`` until ``V* - V(pi_t) < tol``.

    Args:
        m: MDP with a unique optimal policy
        pol0: Initial policy
        stepper: One-step update, e.g. from :func:`make_eg_mdp_stepper`
        tol: Stopping threshold on the suboptimality
        max_iters: Iteration budget

    Returns:
        Per-iteration objective, suboptimality, minimum visitation and
        minimum optimal-action probability

    Raises:
        PreconditionError: If the optimal policy is not unique
    """
    optimal = solve_optimal(m)
    target = float(m.rho @ optimal.V)
    states = np.arange(m.n_states)

    pol = pol0
    current = policy_eval(m, pol)
    objectives = [current.objective]
    d_min = [float(current.d_rho.min())]
    pi_opt_min = [float(pol.pis[states, optimal.actions].min())]
    it = 0
    while target - objectives[-1] >= tol and it < max_iters:
        result = stepper(m, pol, current)
        pol, current = result.policy, result.after
        it += 1
        objectives.append(current.objective)
        d_min.append(float(current.d_rho.min()))
        pi_opt_min.append(float(pol.pis[states, optimal.actions].min()))

    objectives_arr = np.array(objectives)
    deltas = target - objectives_arr
    converged = bool(deltas[-1] < tol)
    max_tv = float(total_variation_to(pol, optimal.actions).max())
    if not converged:
        logging.warning(f"MDP run stopped after {it} iterations with delta={deltas[-1]:.3e}")
    logging.debug(f"MDP run: {it} iterations, max TV to optimum {max_tv:.2e}")
    return MdpTrajectory(
        objectives=objectives_arr,
        deltas=deltas,
        d_min=np.array(d_min),
        pi_opt_min=np.array(pi_opt_min),
        final_policy=pol,
        optimal=optimal,
        converged=converged,
        max_tv=max_tv,
    )


def bellman_limit_violations(
    m: TabularMdp, pol: MdpPolicy, mass_tol: float = 1e-6, tol: float = 1e-4
) -> list[tuple[int, int]]:
    """Pairs ``(s, a)`` with ``pi(a|s) > mass_tol`` and ``|Q(s, a) - V(s)| >= tol``."""
    result = policy_eval(m, pol)
    mask = (pol.pis > mass_tol) & (np.abs(result.U) >= tol)
    return [(int(s), int(a)) for s, a in zip(*np.nonzero(mask))]


def check_bellman_consistency(m: TabularMdp, pol: MdpPolicy, result: EvalResult) -> float:
    """Largest violation of the evaluation identities."""
    v_from_q = np.sum(pol.pis * result.Q, axis=1)
    q_from_v = m.rewards + m.gamma * m.transitions @ result.V
    residuals = (
        np.abs(v_from_q - result.V).max(),
        np.abs(q_from_v - result.Q).max(),
        np.abs(np.sum(pol.pis * result.U, axis=1)).max(),
        abs(result.d_rho.sum() - 1.0),
    )
    worst = float(max(residuals))
    if worst > BELLMAN_TOL:
        logging.warning(f"Bellman residual {worst:.2e} exceeds {BELLMAN_TOL:.0e}")
    return worst


def mdp_telescope_constants(
    eta: float, gamma: float, r_max: float, d_min: ArrayLike
) -> NDArray[np.float64]:
    """``eta * d_min * (1 - gamma) / (2 e^{eta R})`` with ``R = r_max / (1 - gamma)``."""
    horizon_range = r_max / (1.0 - gamma)
    return eta * np.asarray(d_min, dtype=np.float64) * (1.0 - gamma) / (2.0 * math.exp(eta * horizon_range))


def check_mdp_telescope(run: MdpTrajectory, eta: float, gamma: float, r_max: float) -> TelescopeReport:
    """
    Per-step ``delta_t - delta_{t+1} >= c_t delta_t^2`` for an EG run.

    ``c_t`` uses the minimum visitation of the next policy; only steps
    where every state already puts at least 1/2 on its optimal action
    are checked.
    """
    constants = mdp_telescope_constants(eta, gamma, r_max, run.d_min[1:])
    return check_reciprocal_telescope(run.deltas, run.pi_opt_min, constants)


@dataclass(frozen=True)
class LocalEscapeReport:
    """Fraction of local corner policies where the corner action out-gains the best action."""

    epsilon: float
    per_state: dict[int, float]
    n_samples: int

    @property
    def worst(self) -> float:
        return max(self.per_state.values(), default=0.0)


def _local_action_values(m: TabularMdp, pis: NDArray[np.float64]) -> NDArray[np.float64]:
    """``Q^pi`` for a stack of policies of shape ``(n, S, A)``."""
    p_pi = np.einsum("nsa,sat->nst", pis, m.transitions)
    r_pi = np.einsum("nsa,sa->ns", pis, m.rewards)
    system = np.eye(m.n_states) - m.gamma * p_pi
    v = np.linalg.solve(system, r_pi[..., None])[..., 0]
    return m.rewards + m.gamma * np.einsum("sat,nt->nsa", m.transitions, v)


def local_escape_fraction(
    m: TabularMdp,
    gate: GateSpec,
    epsilon: float,
    n_samples: int,
    rng: np.random.Generator,
    corner_actions: ArrayLike | None = None,
) -> LocalEscapeReport:
    """
    Per-state corner dominance under sampled local corner policies.

    Each sample puts ``1 - epsilon`` on the corner action of every state
    and spreads the rest by a flat Dirichlet draw. The action values are
    those of the sampled policy itself. A sample is bad in state ``s`` when
    the best action there differs from the corner and its drift does not
    exceed the corner's.

    Args:
        m: MDP
        gate: Gate for the local drift
        epsilon: Mass off the corner action
        n_samples: Local policies to sample
        rng: Random generator
        corner_actions: Corner action per state (default: the action after the optimal one)

    Returns:
        Bad fraction per state, over states where the best action leaves the corner in some sample
    """
    if corner_actions is None:
        corner_actions = (solve_optimal(m, margin=0.0).actions + 1) % m.n_actions
    corner_actions = np.asarray(corner_actions, dtype=np.intp)
    pis = np.stack(
        [sample_corner_policies(rng, m.n_actions, int(j), epsilon, n_samples) for j in corner_actions],
        axis=1,
    )
    q = _local_action_values(m, pis)
    u = q - np.sum(pis * q, axis=-1, keepdims=True)
    theta_dot = drift_from_advantages(u, pis, gate)

    best = np.argmax(q, axis=-1)
    off_corner = best != corner_actions[None, :]
    best_drift = np.take_along_axis(theta_dot, best[..., None], axis=-1)[..., 0]
    gap = best_drift - theta_dot[:, np.arange(m.n_states), corner_actions]
    bad = off_corner & (gap <= 0.0)

    per_state = {
        s: float(np.mean(bad[:, s])) for s in range(m.n_states) if np.any(off_corner[:, s])
    }
    return LocalEscapeReport(epsilon=epsilon, per_state=per_state, n_samples=n_samples)
