"""
Verification batteries for the bandit, MDP and shared-parameter results.

Each suite returns a :class:`SuiteReport` of named checks. A check fails
only when an inequality breaks inside the range where it was validated,
so a failed report is evidence against the bound rather than a tuning
problem.
"""

import logging
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .. import counterexample as cx
from ..bandit.core import BanditInstance
from ..bandit.discrete_update import (
    check_reciprocal_telescope,
    dg_step,
    eg_step,
    limit_support_violations,
    make_dg_stepper,
    make_eg_stepper,
    run_to_convergence,
    telescope_constant_dg,
    telescope_constant_eg,
)
from ..bandit.dynamics import GateKind, GateSpec, drift_at_policy, drift_summed_form, logit_gap_at_policy, weighted_drift
from ..common.constants import CONVERGED_TV, DEMO_REWARDS
from ..common.errors import GatedPGError
from ..common.utils import spawn_rngs, to_jsonable
from ..mdp.core import (
    MdpPolicy,
    TabularMdp,
    bellman_limit_violations,
    check_bellman_consistency,
    check_mdp_telescope,
    dg_mdp_step,
    eg_mdp_step,
    iterative_policy_evaluation,
    local_escape_fraction,
    make_dg_mdp_stepper,
    make_eg_mdp_stepper,
    pdl_check,
    policy_eval,
    run_mdp_to_convergence,
    solve_optimal,
)
from .theory import (
    check_dg_sector_bound,
    check_eg_sector_bound,
    check_escape_time_bound,
    check_poly_suppression,
    check_poly_suppression_random,
    check_sector_monotonicity,
    fit_rate,
    map_bad_region,
)

SECTOR_SHELLS = (0.001, 0.003, 0.01, 0.03, 0.1, 0.2, 0.3, 0.4)
STEP_ETAS = (0.1, 1.0, 5.0)
STEP_ALPHAS = (0.1, 1.0)
VALUE_DELTA_FLOOR = -1e-12
PROGRESS_TOL = 1e-9
IDENTITY_TOL = 1e-12
PDL_TOL = 1e-9
RATE_R2 = 0.99
LOCAL_ESCAPE_EPS = (0.1, 0.01, 0.001)
LOCAL_ESCAPE_SLACK = 0.005
LOCAL_ESCAPE_TOL = 0.01


class BatterySizes(BaseModel):
    """Sample counts for the verification batteries."""

    model_config = ConfigDict(extra="forbid")

    identity_inputs: int = Field(10_000, ge=1)
    sector_instances: int = Field(20, ge=0)
    sector_samples: int = Field(10_000, ge=1)
    suppression_triples: int = Field(100_000, ge=1)
    region_resolution: int = Field(400, ge=10)
    escape_starts: int = Field(50, ge=1)
    step_bandits: int = Field(10_000, ge=1)
    step_mdps: int = Field(1_000, ge=1)
    convergence_bandits: int = Field(20, ge=1)
    convergence_mdps: int = Field(10, ge=0)
    pdl_pairs: int = Field(1_000, ge=1)
    local_escape_samples: int = Field(2_000, ge=1)


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)
    seconds: float = 0.0


@dataclass
class SuiteReport:
    suite: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failed(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self) -> dict[str, Any]:
        return to_jsonable(
            {
                "suite": self.suite,
                "passed": self.passed,
                "checks": {c.name: {"passed": c.passed, **c.details} for c in self.checks},
            }
        )


def _run_check(report: SuiteReport, name: str, fn: Callable[[], tuple[bool, dict[str, Any]]]) -> None:
    start = time.perf_counter()
    try:
        passed, details = fn()
    except GatedPGError as e:
        logging.error(f"Check {name} raised: {e}", exc_info=True)
        passed, details = False, {"error": str(e)}
    elapsed = time.perf_counter() - start
    logging.info(f"{report.suite}/{name}: {'PASS' if passed else 'FAIL'} ({elapsed:.1f}s)")
    # seconds is kept off to_dict()
    report.checks.append(CheckResult(name, bool(passed), details, elapsed))


def _suboptimal_corners(b: BanditInstance) -> list[int]:
    return [int(j) for j in np.flatnonzero(b.rewards < b.optimal_value)]


def _random_policies(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    return rng.dirichlet(np.ones(k), size=n)


def _random_mdp(rng: np.random.Generator, max_states: int = 8, max_actions: int = 5) -> TabularMdp:
    n_states = int(rng.integers(1, max_states + 1))
    n_actions = int(rng.integers(2, max_actions + 1))
    gamma = float(rng.uniform(0.0, 0.95))
    return TabularMdp.random(rng, n_states, n_actions, gamma=gamma)


def _random_mdp_policy(rng: np.random.Generator, m: TabularMdp) -> MdpPolicy:
    return MdpPolicy(rng.normal(0.0, 2.0, size=(m.n_states, m.n_actions)))


# ----------------------------------------------------------------------
# bandit suite
# ----------------------------------------------------------------------


def _check_identities(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    gates = (GateSpec.pg(), GateSpec.eg(), GateSpec.dg(1.0), GateSpec.dg(0.1))
    worst_gap = worst_form = worst_s = 0.0
    per_k = max(1, sizes.identity_inputs // 7)
    for k in range(2, 9):
        b = BanditInstance.random(rng, k)
        pis = _random_policies(rng, per_k, k)
        a, c = rng.choice(k, size=2, replace=False)
        for gate in gates:
            gap = logit_gap_at_policy(b, pis, gate, int(a), int(c))
            worst_gap = max(worst_gap, float(np.max(np.abs(gap.total - (gap.direct + gap.indirect)))))
            form = np.abs(drift_at_policy(b, pis, gate) - drift_summed_form(b, pis, gate))
            worst_form = max(worst_form, float(form.max()))
        worst_s = max(worst_s, float(np.max(np.abs(weighted_drift(b, pis, GateSpec.pg())))))
    passed = max(worst_gap, worst_form, worst_s) <= IDENTITY_TOL
    return passed, {
        "n_inputs": per_k * 7,
        "max_logit_gap_residual": worst_gap,
        "max_drift_form_residual": worst_form,
        "max_pg_weighted_drift": worst_s,
    }


def _sector_instances(
    sizes: BatterySizes, rng: np.random.Generator
) -> list[tuple[str, BanditInstance, int, float]]:
    """Instances, corners and the DG temperature used for each."""
    demo = BanditInstance(np.array(DEMO_REWARDS), distinct=True)
    cases = [(f"demo/corner{j}", demo, j, 1.0) for j in _suboptimal_corners(demo)]
    for i in range(sizes.sector_instances):
        k = 2 + i % 7
        b = BanditInstance.random(rng, k, min_gap=0.05)
        corner = int(rng.choice(_suboptimal_corners(b)))
        # harmful arms are only suppressed once gap / eta is not small
        cases.append((f"random{i}/K{k}/corner{corner}", b, corner, 0.1))
    return cases


def _check_sector_bounds(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    details: dict[str, Any] = {}
    passed = True
    for name, b, corner, dg_eta in _sector_instances(sizes, rng):
        eg = check_eg_sector_bound(b, corner, SECTOR_SHELLS, sizes.sector_samples, rng)
        dg = check_dg_sector_bound(b, corner, dg_eta, SECTOR_SHELLS, sizes.sector_samples, rng)
        passed &= eg.passed and dg.passed
        details[name] = {
            "rewards": b.rewards.tolist(),
            "dg_eta": dg_eta,
            "eg": {"eps_bracket": list(eg.eps_bracket), "points": eg.n_points, "passed": eg.passed},
            "dg": {"eps_bracket": list(dg.eps_bracket), "points": dg.n_points, "passed": dg.passed},
        }
    return passed, details


def _check_suppression(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    triples = check_poly_suppression_random(sizes.suppression_triples, rng)
    demo = BanditInstance(np.array(DEMO_REWARDS), distinct=True)
    policy_violations = 0
    n_policies = 0
    for pi in _random_policies(rng, 200, 3):
        for eta in STEP_ETAS:
            report = check_poly_suppression(demo, pi, eta)
            policy_violations += report.n_violations + report.n_corner_violations
            n_policies += 1
    return triples.passed and policy_violations == 0, {
        "n_triples": triples.n_checked,
        "triple_violations": triples.n_violations,
        "worst_log_margin": triples.worst_margin,
        "policy_checks": n_policies,
        "policy_violations": policy_violations,
    }


def _check_monotonicity(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    demo = BanditInstance(np.array(DEMO_REWARDS), distinct=True)
    details = {}
    passed = True
    for corner in _suboptimal_corners(demo):
        report = check_sector_monotonicity(demo, corner, SECTOR_SHELLS, sizes.sector_samples, rng)
        passed &= report.passed
        details[f"corner{corner}"] = {"eps_bracket": list(report.eps_bracket), "passed": report.passed}
    return passed, details


def _check_bad_region(sizes: BatterySizes) -> tuple[bool, dict]:
    demo = BanditInstance(np.array(DEMO_REWARDS), distinct=True)
    # the corner holding the runner-up arm is where PG stalls
    corner = int(np.argsort(-demo.rewards)[1])
    maps = {
        gate.label: map_bad_region(demo, gate, corner, sizes.region_resolution)
        for gate in (GateSpec.pg(), GateSpec.eg(), GateSpec.dg(1.0))
    }
    pg, eg, dg = maps["pg"].shell_fractions, maps["eg"].shell_fractions, maps["dg"].shell_fractions
    claims = {
        "pg_stuck_near_corner": bool(pg[0.01] > 0.05),
        "eg_small_near_corner": bool(eg[0.001] < 0.005),
        "eg_shrinks_tenfold": bool(eg[0.1] >= 10.0 * eg[0.001]),
        "dg_shrinks": bool(dg[0.001] <= dg[0.1]),
    }
    return all(claims.values()), {"corner": corner, "claims": claims, **{k: v.to_dict() for k, v in maps.items()}}


def _check_escape_time(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    demo = BanditInstance(np.array(DEMO_REWARDS), distinct=True)
    details = {}
    passed = True
    for corner in _suboptimal_corners(demo):
        report = check_escape_time_bound(demo, corner, sizes.escape_starts, rng, samples_per_eps=sizes.sector_samples)
        passed &= report.passed
        details[f"corner{corner}"] = report.to_dict()
    return passed, details


def _check_bandit_steps(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    worst_delta = np.inf
    worst_progress = 0.0
    for _ in range(sizes.step_bandits):
        k = int(rng.integers(2, 9))
        b = BanditInstance.random(rng, k, distinct=False)
        pi = rng.dirichlet(np.ones(k))
        reports = [eg_step(b, pi, eta) for eta in STEP_ETAS]
        reports += [dg_step(b, pi, alpha, eta) for alpha in STEP_ALPHAS for eta in STEP_ETAS]
        for r in reports:
            worst_delta = min(worst_delta, r.value_delta)
            worst_progress = max(worst_progress, abs(r.value_delta - r.progress_formula))
    return worst_delta >= VALUE_DELTA_FLOOR and worst_progress <= PROGRESS_TOL, {
        "n_bandits": sizes.step_bandits,
        "min_value_delta": worst_delta,
        "max_progress_residual": worst_progress,
    }


def _convergence_entry(b: BanditInstance, label: str, eta: float, alpha: float | None) -> tuple[bool, dict]:
    pi0 = np.full(b.n_arms, 1.0 / b.n_arms)
    if alpha is None:
        stepper, constant = make_eg_stepper(eta), telescope_constant_eg(eta, b.reward_range)
    else:
        stepper, constant = make_dg_stepper(alpha, eta), telescope_constant_dg(alpha, b.reward_range)
    traj = run_to_convergence(b, pi0, stepper, tol=1e-4, max_iters=1_000_000)
    tv = float(1.0 - traj.final_pi[b.optimal])
    # arms whose mass is still above what tol permits
    mass_tol = max(1e-6, 10 * 1e-4 / b.optimality_gap)
    support = limit_support_violations(b, traj.final_pi, mass_tol=mass_tol, adv_tol=1e-3)
    telescope = check_reciprocal_telescope(traj.deltas, traj.pis[:, b.optimal], constant)
    entry: dict[str, Any] = {
        "method": label,
        "iterations": len(traj) - 1,
        "converged": traj.converged,
        "tv_to_optimum": tv,
        "support_violations": support,
        "telescope_violations": telescope.n_violations,
    }
    ok = traj.converged and tv < CONVERGED_TV and not support and telescope.passed
    try:
        rate = fit_rate(traj.deltas)
        entry.update(rate_slope=rate.slope, rate_r2=rate.r_squared, super_reciprocal=rate.super_reciprocal)
        ok &= rate.r_squared >= RATE_R2 or rate.super_reciprocal
    except GatedPGError as e:
        entry["rate_error"] = str(e)
    return ok, entry


def _check_bandit_convergence(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    details = {}
    passed = True
    for i in range(sizes.convergence_bandits):
        k = 2 + i % 5
        b = BanditInstance.random(rng, k, min_gap=0.1)
        for label, eta, alpha in (("eg", 1.0, None), ("dg", 1.0, 1.0)):
            ok, entry = _convergence_entry(b, label, eta, alpha)
            passed &= ok
            details[f"bandit{i}/{label}"] = {"rewards": b.rewards.tolist(), **entry}
    return passed, details


def run_bandit_suite(sizes: BatterySizes | None = None, seed: int = 0) -> SuiteReport:
    """Logit-gap identities, sector bounds, suppression, bad region, escape time, discrete steps, convergence."""
    sizes = sizes or BatterySizes()
    rngs = spawn_rngs(seed, 7)
    report = SuiteReport("bandit")
    _run_check(report, "logit_gap_identity", lambda: _check_identities(sizes, rngs[0]))
    _run_check(report, "sector_bounds", lambda: _check_sector_bounds(sizes, rngs[1]))
    _run_check(report, "poly_suppression", lambda: _check_suppression(sizes, rngs[2]))
    _run_check(report, "sector_monotonicity", lambda: _check_monotonicity(sizes, rngs[3]))
    _run_check(report, "bad_region", lambda: _check_bad_region(sizes))
    _run_check(report, "escape_time_bound", lambda: _check_escape_time(sizes, rngs[4]))
    _run_check(report, "discrete_monotonicity", lambda: _check_bandit_steps(sizes, rngs[5]))
    _run_check(report, "global_convergence", lambda: _check_bandit_convergence(sizes, rngs[6]))
    return report


# ----------------------------------------------------------------------
# MDP suite
# ----------------------------------------------------------------------


def _check_pdl(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    worst = 0.0
    for _ in range(sizes.pdl_pairs):
        m = _random_mdp(rng)
        worst = max(worst, pdl_check(m, _random_mdp_policy(rng, m), _random_mdp_policy(rng, m)))
    return worst < PDL_TOL, {"n_pairs": sizes.pdl_pairs, "max_residual": worst}


def _check_evaluation(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    worst_bellman = worst_iterative = 0.0
    n = max(1, sizes.pdl_pairs // 10)
    for _ in range(n):
        m = _random_mdp(rng)
        pol = _random_mdp_policy(rng, m)
        result = policy_eval(m, pol)
        worst_bellman = max(worst_bellman, check_bellman_consistency(m, pol, result))
        worst_iterative = max(worst_iterative, float(np.abs(iterative_policy_evaluation(m, pol) - result.V).max()))
    return worst_bellman < 1e-9 and worst_iterative < 1e-8, {
        "n_policies": n,
        "max_bellman_residual": worst_bellman,
        "max_iterative_gap": worst_iterative,
    }


def _check_mdp_steps(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    worst_delta = np.inf
    worst_progress = 0.0
    for _ in range(sizes.step_mdps):
        m = _random_mdp(rng)
        pol = _random_mdp_policy(rng, m)
        current = policy_eval(m, pol)
        results = [eg_mdp_step(m, pol, eta, current) for eta in STEP_ETAS]
        results += [dg_mdp_step(m, pol, alpha, eta, current) for alpha in STEP_ALPHAS for eta in STEP_ETAS]
        for r in results:
            worst_delta = min(worst_delta, r.value_delta)
            worst_progress = max(worst_progress, abs(r.value_delta - r.progress_formula))
    return worst_delta >= VALUE_DELTA_FLOOR and worst_progress <= PROGRESS_TOL, {
        "n_mdps": sizes.step_mdps,
        "min_value_delta": worst_delta,
        "max_progress_residual": worst_progress,
    }


def _check_mdp_convergence(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    details = {}
    passed = True
    eta = 20.0
    for i in range(sizes.convergence_mdps):
        m = TabularMdp.random(rng, int(rng.integers(2, 5)), int(rng.integers(2, 4)), gamma=0.9, min_margin=0.1)
        # delta >= sum_s rho(s) margin(s) TV(s), so this tol caps every TV at 5e-4
        tol = min(1e-5, 0.5 * CONVERGED_TV * float(m.rho.min()) * 0.1)
        corner = MdpPolicy.corner(m, (solve_optimal(m).actions + 1) % m.n_actions)
        runs = [
            (f"{start}/{label}", pol0, stepper)
            for start, pol0 in (("uniform", MdpPolicy.uniform(m)), ("corner", corner))
            for label, stepper in (("eg", make_eg_mdp_stepper(eta)), ("dg", make_dg_mdp_stepper(eta, 1.0)))
        ]
        for label, pol0, stepper in runs:
            run = run_mdp_to_convergence(m, pol0, stepper, tol=tol, max_iters=500_000)
            ok = run.converged and run.max_tv < CONVERGED_TV
            ok &= not bellman_limit_violations(m, run.final_policy, mass_tol=CONVERGED_TV, tol=1e-2)
            entry: dict[str, Any] = {
                "states": m.n_states,
                "actions": m.n_actions,
                "iterations": run.iterations,
                "converged": run.converged,
                "max_tv": run.max_tv,
            }
            if label.endswith("eg"):
                telescope = check_mdp_telescope(run, eta, m.gamma, m.r_max)
                ok &= telescope.passed
                entry["telescope_violations"] = telescope.n_violations
            try:
                rate = fit_rate(run.deltas)
                ok &= rate.r_squared >= RATE_R2 or rate.super_reciprocal
                entry.update(rate_slope=rate.slope, rate_r2=rate.r_squared)
            except GatedPGError as e:
                entry["rate_error"] = str(e)
            passed &= ok
            details[f"mdp{i}/{label}"] = entry
    return passed, details


def _check_local_escape(sizes: BatterySizes, rng: np.random.Generator) -> tuple[bool, dict]:
    details = {}
    passed = True
    for i in range(3):
        m = TabularMdp.random(rng, 4, 3, gamma=0.9, min_margin=0.05)
        for gate in (GateSpec.eg(), GateSpec.dg(1.0)):
            fractions = {
                eps: local_escape_fraction(m, gate, eps, sizes.local_escape_samples, rng).worst
                for eps in LOCAL_ESCAPE_EPS
            }
            shrinking = all(
                small <= large + LOCAL_ESCAPE_SLACK
                for large, small in zip(fractions.values(), list(fractions.values())[1:])
            )
            if gate.kind is GateKind.EG:
                ok = shrinking and fractions[LOCAL_ESCAPE_EPS[-1]] <= LOCAL_ESCAPE_TOL
            else:
                ok = fractions[LOCAL_ESCAPE_EPS[-1]] <= fractions[LOCAL_ESCAPE_EPS[0]]
            passed &= ok
            details[f"mdp{i}/{gate.label}"] = {
                "fractions": {f"{k:g}": v for k, v in fractions.items()},
                "passed": ok,
            }
    return passed, details


def run_mdp_suite(sizes: BatterySizes | None = None, seed: int = 0) -> SuiteReport:
    """Performance difference, evaluation, discrete monotonicity, convergence and local escape."""
    sizes = sizes or BatterySizes()
    rngs = spawn_rngs(seed, 5)
    report = SuiteReport("mdp")
    _run_check(report, "performance_difference", lambda: _check_pdl(sizes, rngs[0]))
    _run_check(report, "policy_evaluation", lambda: _check_evaluation(sizes, rngs[1]))
    _run_check(report, "discrete_monotonicity", lambda: _check_mdp_steps(sizes, rngs[2]))
    _run_check(report, "global_convergence", lambda: _check_mdp_convergence(sizes, rngs[3]))
    _run_check(report, "local_escape", lambda: _check_local_escape(sizes, rngs[4]))
    return report


# ----------------------------------------------------------------------
# shared-parameter suite
# ----------------------------------------------------------------------


def _check_fixed_points() -> tuple[bool, dict]:
    pg = cx.find_fixed_points(GateSpec.pg())
    eg = cx.find_fixed_points(GateSpec.eg())
    dg = cx.find_fixed_points(GateSpec.dg(1.0))
    grid = np.linspace(0.001, 0.999, 10_000)
    claims = {
        "pg_no_interior_root": not pg.roots and bool(np.all(cx.f_pg(grid) < 0.0)),
        "eg_root_at_one_eleventh": len(eg.roots) == 1 and bool(abs(eg.roots[0] - 1.0 / 11.0) < 1e-9),
        "eg_slope": len(eg.roots) == 1 and bool(abs(eg.derivatives[0] + 50.0 / 11.0) < 1e-6),
        "eg_stable": eg.stability == ["stable"],
        "dg_root_near_0116": len(dg.roots) == 1 and bool(abs(dg.roots[0] - 0.116) < 0.005),
        "dg_stable": dg.stability == ["stable"],
        "dg_positive_near_zero": bool(cx.f_dg(0.05, 1.0) > 0.0),
        "dg_negative_at_half": bool(cx.f_dg(0.5, 1.0) < 0.0),
    }
    return all(claims.values()), {
        "claims": claims,
        "pg": pg.to_dict(),
        "eg": eg.to_dict(),
        "dg": dg.to_dict(),
        "f_dg_at_0.05": cx.f_dg(0.05, 1.0),
    }


def _check_closed_forms() -> tuple[bool, dict]:
    grid = np.linspace(0.001, 0.999, 10_000)
    pg = float(np.abs(cx.f_pg(grid) - cx.drift_from_state_sums(grid, GateSpec.pg())).max())
    eg = float(np.abs(cx.f_eg(grid) - cx.drift_from_state_sums(grid, GateSpec.eg())).max())
    cold = float(np.abs(cx.f_dg(grid, 1e-6) - cx.f_eg(grid)).max())
    return pg <= 1e-12 and eg <= 1e-12 and cold <= 1e-4, {
        "pg_residual": pg,
        "eg_residual": eg,
        "dg_cold_limit_gap": cold,
    }


def _check_flows() -> tuple[bool, dict]:
    pg = cx.integrate_shared_flow(GateSpec.pg(), 0.0, dt=0.01, max_time=200.0)
    reached = float(pg.first_time_below(1e-3)[0])
    starts = np.array([-6.0, 2.0])
    eg = cx.integrate_shared_flow(GateSpec.eg(), starts, dt=0.01, max_time=200.0)
    dg = cx.integrate_shared_flow(GateSpec.dg(1.0), starts, dt=0.01, max_time=200.0)
    eg_root = cx.find_fixed_points(GateSpec.eg()).roots[0]
    dg_root = cx.find_fixed_points(GateSpec.dg(1.0)).roots[0]
    claims = {
        "pg_reaches_best_in_class": bool(np.isfinite(reached)),
        "eg_converges_both_sides": bool(np.all(np.abs(eg.final_p - eg_root) < 1e-6)),
        "dg_converges_both_sides": bool(np.all(np.abs(dg.final_p - dg_root) < 1e-6)),
    }
    return all(claims.values()), {
        "claims": claims,
        "pg_time_below_1e-3": reached,
        "eg_final_p": eg.final_p.tolist(),
        "dg_final_p": dg.final_p.tolist(),
    }


def _check_ablation() -> tuple[bool, dict]:
    ablated = cx.sign_conflict_ablation()
    sweep = cx.sweep_dg_temperatures()
    return not ablated.roots, {
        "ablation": ablated.to_dict(),
        "dg_temperature_roots": {f"{eta:g}": r.roots for eta, r in sweep.items()},
    }


def run_counterexample_suite(sizes: BatterySizes | None = None, seed: int = 0) -> SuiteReport:
    """Fixed points, closed forms, flows and the sign-conflict ablation."""
    report = SuiteReport("counterexample")
    _run_check(report, "fixed_points", _check_fixed_points)
    _run_check(report, "closed_forms", _check_closed_forms)
    _run_check(report, "shared_flows", _check_flows)
    _run_check(report, "sign_conflict_ablation", _check_ablation)
    return report


SUITES: dict[str, Callable[[BatterySizes | None, int], SuiteReport]] = {
    "bandit": run_bandit_suite,
    "mdp": run_mdp_suite,
    "counterexample": run_counterexample_suite,
}


def run_suites(names: list[str], sizes: BatterySizes | None = None, seed: int = 0) -> list[SuiteReport]:
    """Run the named suites in a fixed order."""
    order = [name for name in SUITES if name in names]
    return [SUITES[name](sizes, seed) for name in order]
