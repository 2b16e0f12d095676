"""
Numerical falsification of the sector, suppression and corner-dominance bounds.

All checks evaluate the analytic drift at sampled policies, so a report is
fully determined by the instance, the sample sizes and the generator seed.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy import special, stats

from ..bandit.core import (
    BanditInstance,
    advantages,
    policy_logits,
    sample_corner_policies,
    surprisal,
    validate_policy,
)
from ..bandit.dynamics import GateKind, GateSpec, corner_dominance_gap, drift_at_policy
from ..bandit.flow_sim import FlowConfig, integrate_batch
from ..common.constants import DEFAULT_EPS_BAR, DEFAULT_GRID_RESOLUTION, DEFAULT_SHELLS, RATE_FIT_MIN_POINTS
from ..common.errors import InsufficientDataError, InvalidInputError

EG_SECTOR_DIVISOR = 4.0
DG_SECTOR_DIVISOR = 8.0
MONOTONE_TOL = 1e-10


@dataclass(frozen=True)
class SectorPoint:
    pi: NDArray[np.float64]
    corner: int
    epsilon: float
    in_sector: bool


@dataclass
class ShellResult:
    epsilon: float
    n_points: int
    n_violations: int
    worst_margin: float
    skipped: bool = False


@dataclass
class BoundCheckReport:
    """
    Outcome of a one-sided bound check.

    ``worst_margin`` is the minimum of (lhs - rhs) over checked points, so
    a negative value is a violation.
    """

    n_points: int
    n_violations: int
    worst_margin: float
    witness: SectorPoint | None = None
    shells: list[ShellResult] = field(default_factory=list)
    eps_bracket: tuple[float | None, float | None] = (None, None)
    n_skipped: int = 0

    @property
    def violations_in_bracket(self) -> int:
        clean, _ = self.eps_bracket
        if clean is None:
            return sum(s.n_violations for s in self.shells if not s.skipped)
        return sum(s.n_violations for s in self.shells if not s.skipped and s.epsilon <= clean)

    @property
    def passed(self) -> bool:
        """A bracket exists and nothing inside it is violated."""
        return self.eps_bracket[0] is not None and self.violations_in_bracket == 0

    def to_dict(self) -> dict:
        return {
            "n_points": self.n_points,
            "n_violations": self.n_violations,
            "worst_margin": self.worst_margin,
            "n_skipped": self.n_skipped,
            "eps_bracket": list(self.eps_bracket),
            "violations_in_bracket": self.violations_in_bracket,
            "witness": None if self.witness is None else {
                "pi": self.witness.pi.tolist(),
                "corner": self.witness.corner,
                "epsilon": self.witness.epsilon,
            },
            "shells": [vars(s) for s in self.shells],
            "passed": self.passed,
        }


def _check_corner(b: BanditInstance, corner: int) -> int:
    b.check_arm(corner)
    optimal = b.optimal
    if corner == optimal or b.rewards[corner] == b.rewards[optimal]:
        raise InvalidInputError(f"corner {corner} must be a strictly sub-optimal arm")
    return optimal


def in_sector(pi: ArrayLike, optimal: int, corner: int, eps_bar: float) -> NDArray[np.bool_]:
    """Membership in ``{0 < eps < eps_bar, pi(opt) >= eps / K}``."""
    pi = np.asarray(pi, dtype=np.float64)
    eps = 1.0 - pi[..., corner]
    k = pi.shape[-1]
    return (eps > 0.0) & (eps < eps_bar) & (pi[..., optimal] >= eps / k)


def sample_sector(
    b: BanditInstance, corner: int, eps: float, n: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    """
    Policies with ``pi(corner) = 1 - eps`` and ``pi(opt) >= eps / K``.

    The off-corner mass is split by a flat Dirichlet draw, rejecting
    draws that leave the optimal arm below ``eps / K``.
    """
    optimal = _check_corner(b, corner)
    k = b.n_arms
    accepted: list[NDArray[np.float64]] = []
    total = 0
    while total < n:
        batch = sample_corner_policies(rng, k, corner, eps, max(2 * (n - total), 16))
        keep = batch[batch[:, optimal] >= eps / k]
        accepted.append(keep)
        total += keep.shape[0]
    return np.concatenate(accepted)[:n]


def _sector_shells(
    b: BanditInstance,
    corner: int,
    gate: GateSpec,
    divisor: float,
    eps_values: Sequence[float],
    samples_per_eps: int,
    rng: np.random.Generator,
    eps_bar: float,
) -> BoundCheckReport:
    optimal = _check_corner(b, corner)
    k = b.n_arms
    delta = b.gap(optimal, corner)
    shells: list[ShellResult] = []
    worst = math.inf
    witness = None
    for eps in sorted(float(e) for e in eps_values):
        if not 0.0 < eps < eps_bar:
            shells.append(ShellResult(eps, 0, 0, math.nan, skipped=True))
            continue
        pis = sample_sector(b, corner, eps, samples_per_eps, rng)
        margin = corner_dominance_gap(b, pis, gate, optimal, corner) - delta * eps / (divisor * k)
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst = float(margin[i])
            witness = SectorPoint(pis[i], corner, eps, True)
        shells.append(ShellResult(eps, pis.shape[0], int(np.sum(margin < 0.0)), float(margin[i])))
    return _report_from_shells(shells, worst, witness)


def _report_from_shells(shells: list[ShellResult], worst: float, witness: SectorPoint | None) -> BoundCheckReport:
    checked = [s for s in shells if not s.skipped]
    clean = None
    first_bad = None
    for s in checked:
        if s.n_violations:
            first_bad = s.epsilon
            break
        clean = s.epsilon
    return BoundCheckReport(
        n_points=sum(s.n_points for s in checked),
        n_violations=sum(s.n_violations for s in checked),
        worst_margin=worst,
        witness=witness,
        shells=shells,
        eps_bracket=(clean, first_bad),
        n_skipped=len(shells) - len(checked),
    )


def check_eg_sector_bound(
    b: BanditInstance,
    corner: int,
    eps_values: Sequence[float],
    samples_per_eps: int,
    rng: np.random.Generator,
    eps_bar: float = DEFAULT_EPS_BAR,
) -> BoundCheckReport:
    """
    Check ``theta_dot(opt) - theta_dot(corner) >= gap * eps / (4K)`` under EG.

    Args:
        b: Bandit instance
        corner: Strictly sub-optimal corner arm
        eps_values: Shell values of ``eps = 1 - pi(corner)``
        samples_per_eps: Sector points per shell
        rng: Random generator
        eps_bar: Shells at or above this value are skipped

    Returns:
        Report with per-shell counts and the clean-prefix bracket of eps0
    """
    return _sector_shells(b, corner, GateSpec.eg(), EG_SECTOR_DIVISOR, eps_values, samples_per_eps, rng, eps_bar)


def check_dg_sector_bound(
    b: BanditInstance,
    corner: int,
    eta: float,
    eps_values: Sequence[float],
    samples_per_eps: int,
    rng: np.random.Generator,
    eps_bar: float = DEFAULT_EPS_BAR,
) -> BoundCheckReport:
    """Check ``theta_dot(opt) - theta_dot(corner) >= gap * eps / (8K)`` under DG(eta)."""
    return _sector_shells(
        b, corner, GateSpec.dg(eta), DG_SECTOR_DIVISOR, eps_values, samples_per_eps, rng, eps_bar
    )


def bracket_epsilon0(
    b: BanditInstance,
    corner: int,
    gate: GateSpec,
    rng: np.random.Generator,
    lo: float = 1e-4,
    hi: float = DEFAULT_EPS_BAR,
    n_samples: int = 2000,
    iterations: int = 20,
) -> tuple[float | None, float | None]:
    """
    Bisect (in log space) for the largest eps whose shell shows no violation.

    Returns:
        ``(last clean eps, first violating eps)``; ``(hi, None)`` when the
        whole range is clean and ``(None, lo)`` when even ``lo`` fails
    """
    divisor = EG_SECTOR_DIVISOR if gate.kind is GateKind.EG else DG_SECTOR_DIVISOR

    def clean(eps: float) -> bool:
        report = _sector_shells(b, corner, gate, divisor, [eps], n_samples, rng, eps_bar=1.0)
        return report.n_violations == 0

    if clean(hi):
        return hi, None
    if not clean(lo):
        return None, lo
    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if clean(mid):
            lo = mid
        else:
            hi = mid
    return lo, hi


def check_sector_monotonicity(
    b: BanditInstance,
    corner: int,
    eps_values: Sequence[float],
    samples_per_eps: int,
    rng: np.random.Generator,
    eps_bar: float = DEFAULT_EPS_BAR,
) -> BoundCheckReport:
    """
    Check that both ``log(pi(opt)/pi(corner))`` and ``eps`` grow under the EG flow.

    The time derivatives are evaluated analytically at sampled sector
    points; the margin is the smaller of the two derivatives.
    """
    optimal = _check_corner(b, corner)
    gate = GateSpec.eg()
    shells: list[ShellResult] = []
    worst = math.inf
    witness = None
    for eps in sorted(float(e) for e in eps_values):
        if not 0.0 < eps < eps_bar:
            shells.append(ShellResult(eps, 0, 0, math.nan, skipped=True))
            continue
        pis = sample_sector(b, corner, eps, samples_per_eps, rng)
        theta_dot = drift_at_policy(b, pis, gate)
        ratio_rate = theta_dot[:, optimal] - theta_dot[:, corner]
        # d eps / dt = -pi_j (theta_dot_j - sum_a pi_a theta_dot_a)
        eps_rate = -pis[:, corner] * (theta_dot[:, corner] - np.sum(pis * theta_dot, axis=1))
        margin = np.minimum(ratio_rate, eps_rate)
        i = int(np.argmin(margin))
        if margin[i] < worst:
            worst = float(margin[i])
            witness = SectorPoint(pis[i], corner, eps, True)
        shells.append(ShellResult(eps, pis.shape[0], int(np.sum(margin < 0.0)), float(margin[i])))
    return _report_from_shells(shells, worst, witness)


@dataclass
class SuppressionReport:
    n_checked: int
    n_violations: int
    worst_margin: float
    n_corner_checked: int = 0
    n_corner_violations: int = 0

    @property
    def passed(self) -> bool:
        return self.n_violations == 0 and self.n_corner_violations == 0


def suppression_margins(pi_k: ArrayLike, u_k: ArrayLike, eta: ArrayLike) -> NDArray[np.float64]:
    """
    Log-domain margin of ``w(k) <= pi(k)^{|U(k)| / eta}`` for ``U(k) <= 0``.

    Both sides are compared as logarithms; a negative margin is a violation.
    """
    pi_k = np.asarray(pi_k, dtype=np.float64)
    u_k = np.asarray(u_k, dtype=np.float64)
    ell = surprisal(pi_k)
    log_w = special.log_expit(u_k * ell / eta)
    log_bound = -np.abs(u_k) * ell / eta
    return log_bound - log_w


def check_poly_suppression(b: BanditInstance, pi: ArrayLike, eta: float) -> SuppressionReport:
    """
    Check the polynomial suppression of negative-advantage arms under DG.

    Every arm with ``U(k) < 0`` must satisfy ``w(k) <= pi(k)^{|U(k)|/eta}``.
    Near the corner ``j = argmax pi``, arms with ``|U(k)| >= gap_jk / 2``
    must also satisfy ``w(k) pi(k) <= pi(k)^{1 + gap_jk / (2 eta)}``.

    Raises:
        InvalidInputError: If no arm has negative advantage
    """
    pi = validate_policy(pi, b.n_arms)
    if pi.ndim != 1:
        raise InvalidInputError("check_poly_suppression takes a single policy")
    u = advantages(b, pi)
    negative = np.flatnonzero(u < 0.0)
    if negative.size == 0:
        raise InvalidInputError("no arm has negative advantage")
    margins = suppression_margins(pi[negative], u[negative], eta)

    corner = int(np.argmax(pi))
    gaps = b.rewards[corner] - b.rewards[negative]
    near = (gaps > 0.0) & (np.abs(u[negative]) >= gaps / 2.0)
    ell = surprisal(pi[negative])
    log_w = special.log_expit(u[negative] * ell / eta)
    # log(w pi) <= (1 + gap / (2 eta)) log pi
    corner_margin = -(1.0 + gaps / (2.0 * eta)) * ell - (log_w - ell)
    corner_checked = corner_margin[near]
    worst = float(min(margins.min(), corner_checked.min() if corner_checked.size else math.inf))
    return SuppressionReport(
        n_checked=int(negative.size),
        n_violations=int(np.sum(margins < 0.0)),
        worst_margin=worst,
        n_corner_checked=int(corner_checked.size),
        n_corner_violations=int(np.sum(corner_checked < 0.0)),
    )


def check_poly_suppression_random(
    n_triples: int, rng: np.random.Generator, eta_range: tuple[float, float] = (1e-3, 10.0)
) -> SuppressionReport:
    """Suppression bound on random ``(pi(k), U(k) < 0, eta)`` triples."""
    pi_k = np.exp(rng.uniform(np.log(1e-12), 0.0, size=n_triples))
    u_k = -rng.uniform(1e-6, 1.0, size=n_triples)
    eta = np.exp(rng.uniform(np.log(eta_range[0]), np.log(eta_range[1]), size=n_triples))
    margins = suppression_margins(pi_k, u_k, eta)
    return SuppressionReport(
        n_checked=n_triples,
        n_violations=int(np.sum(margins < 0.0)),
        worst_margin=float(margins.min()),
    )


@dataclass
class RegionMap:
    """Good/bad labels of ``theta_dot(opt) - theta_dot(corner)`` over the simplex."""

    gate: str
    corner: int
    points: NDArray[np.float64]
    bad: NDArray[np.bool_]
    overall_fraction: float
    shell_fractions: dict[float, float]
    delta_eta: float | None = None

    def to_frame(self) -> pd.DataFrame:
        columns = {f"pi_{i}": self.points[:, i] for i in range(self.points.shape[1])}
        columns["label"] = np.where(self.bad, "bad", "good")
        return pd.DataFrame(columns)

    def to_dict(self) -> dict:
        return {
            "gate": self.gate,
            "corner": self.corner,
            "n_cells": int(self.bad.size),
            "overall_fraction": self.overall_fraction,
            "shell_fractions": {f"{k:g}": v for k, v in self.shell_fractions.items()},
            "delta_eta": self.delta_eta,
        }


def simplex_grid(resolution: int) -> NDArray[np.float64]:
    """
    Centroids of the ``resolution**2`` triangles of a regular 3-simplex subdivision.

    All centroids are interior points.
    """
    n = resolution
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j = i.ravel(), j.ravel()
    up = i + j <= n - 1
    down = i + j <= n - 2
    upward = np.stack([i[up] + 1 / 3, j[up] + 1 / 3, n - 1 - i[up] - j[up] + 1 / 3], axis=1)
    downward = np.stack([i[down] + 2 / 3, j[down] + 2 / 3, n - 2 - i[down] - j[down] + 2 / 3], axis=1)
    return np.concatenate([upward, downward]) / n


def map_bad_region(
    b: BanditInstance,
    gate: GateSpec,
    corner: int,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
    shells: Sequence[float] = DEFAULT_SHELLS,
    rng: np.random.Generator | None = None,
) -> RegionMap:
    """
    Label simplex cells by whether the optimal arm out-gains the corner arm.

    For K = 3 the simplex is tiled by a barycentric grid, and each corner
    neighbourhood ``{pi(corner) > 1 - eps}`` gets its own grid of the same
    size. For other K the cells are replaced by uniform random samples.

    Args:
        b: Bandit instance
        gate: Gate
        corner: Strictly sub-optimal corner arm
        grid_resolution: Cells per side (K = 3) or sqrt of the sample count
        shells: Neighbourhood sizes for the shell fractions
        rng: Generator, required when K != 3

    Returns:
        Region map; cells with ``gap <= 0`` are bad
    """
    optimal = _check_corner(b, corner)
    k = b.n_arms
    if k == 3:
        base = simplex_grid(grid_resolution)
    else:
        if rng is None:
            raise InvalidInputError("map_bad_region needs a generator when K != 3")
        base = rng.dirichlet(np.ones(k), size=grid_resolution**2)

    def bad_mask(points: NDArray[np.float64]) -> NDArray[np.bool_]:
        return corner_dominance_gap(b, points, gate, optimal, corner) <= 0.0

    labels = bad_mask(base)
    vertex = np.zeros(k)
    vertex[corner] = 1.0
    shell_fractions = {}
    for eps in shells:
        local = (1.0 - eps) * vertex + eps * base
        shell_fractions[float(eps)] = float(np.mean(bad_mask(local)))

    delta_eta = None
    if gate.kind is GateKind.DG:
        harmful = b.rewards[corner] - b.rewards[b.rewards < b.rewards[corner]]
        delta_eta = float(harmful.min() / (2.0 * gate.eta)) if harmful.size else None
    logging.info(
        f"Bad region {gate.label} at corner {corner}: overall {labels.mean():.4f}, "
        + ", ".join(f"eps<{e:g}: {f:.4f}" for e, f in shell_fractions.items())
    )
    return RegionMap(
        gate=gate.label,
        corner=corner,
        points=base,
        bad=labels,
        overall_fraction=float(labels.mean()),
        shell_fractions=shell_fractions,
        delta_eta=delta_eta,
    )


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of ``1/delta_t`` against ``t`` on the trailing half."""

    slope: float
    intercept: float
    r_squared: float
    t0_estimate: int | None
    super_reciprocal: bool


def fit_rate(delta_series: ArrayLike) -> RateFit:
    """
    Fit ``1/delta_t = c t + b`` on the trailing half of the series.

    Also fits ``log delta_t`` against ``t``; when that fit is better the
    decay is faster than ``1/t`` and ``super_reciprocal`` is set.

    Args:
        delta_series: Positive suboptimality series indexed by iteration

    Returns:
        Slope ``c``, R^2, and the first iteration after which the fitted
        line stays within 5% of ``1/delta_t``

    Raises:
        InsufficientDataError: If the trailing half has fewer than 20 points
        InvalidInputError: If the series has non-positive entries
    """
    deltas = np.asarray(delta_series, dtype=np.float64)
    if deltas.ndim != 1:
        raise InvalidInputError("delta series must be one-dimensional")
    start = deltas.size // 2
    if deltas.size - start < RATE_FIT_MIN_POINTS:
        raise InsufficientDataError(
            f"need at least {RATE_FIT_MIN_POINTS} tail points, got {deltas.size - start}"
        )
    if np.any(~np.isfinite(deltas)) or np.any(deltas <= 0.0):
        raise InvalidInputError("delta series must be finite and positive")

    t = np.arange(deltas.size, dtype=np.float64)
    tail_t = t[start:]
    reciprocal = 1.0 / deltas
    fit = stats.linregress(tail_t, reciprocal[start:])
    r_squared = float(fit.rvalue**2)
    log_fit = stats.linregress(tail_t, np.log(deltas[start:]))
    super_reciprocal = bool(log_fit.slope < 0.0 and log_fit.rvalue**2 > r_squared)

    predicted = fit.intercept + fit.slope * t
    off = np.flatnonzero(np.abs(predicted - reciprocal) > 0.05 * reciprocal)
    if off.size == 0:
        t0 = 0
    elif off[-1] + 1 < deltas.size:
        t0 = int(off[-1] + 1)
    else:
        t0 = None
    return RateFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=r_squared,
        t0_estimate=t0,
        super_reciprocal=super_reciprocal,
    )


@dataclass
class EscapeBoundReport:
    """First-exit times of EG flows against the escape-time bound."""

    n_starts: int
    n_violations: int
    n_monotonicity_violations: int
    eps_bar: float
    worst_ratio: float
    exit_reasons: dict[str, int]

    @property
    def passed(self) -> bool:
        return self.n_violations == 0 and self.n_monotonicity_violations == 0

    def to_dict(self) -> dict:
        return {**vars(self), "passed": self.passed}


def check_escape_time_bound(
    b: BanditInstance,
    corner: int,
    n_starts: int,
    rng: np.random.Generator,
    eps_bar: float | None = None,
    dt: float = 0.1,
    samples_per_eps: int = 2000,
) -> EscapeBoundReport:
    """
    Integrate EG flows from random sector starts and compare first-exit times.

    ``eps_bar`` defaults to the largest shell in a fixed ladder where both
    the EG sector bound and sector monotonicity hold at every smaller shell.
    Starts have ``eps0`` uniform in ``[eps_bar/4, eps_bar)``. Each flow
    stops on parity with the corner arm or on leaving the sector, and the
    stopping time must not exceed
    ``4K / (gap * eps0) * log(pi0(corner) / pi0(opt))`` (plus one step).
    Along the way ``log(pi(opt)/pi(corner))`` and ``eps`` must not decrease.
    """
    optimal = _check_corner(b, corner)
    k = b.n_arms
    delta = b.gap(optimal, corner)
    if eps_bar is None:
        ladder = [0.001, 0.003, 0.01, 0.03, 0.1, 0.2, 0.3, 0.4, 0.49]
        sector = check_eg_sector_bound(b, corner, ladder, samples_per_eps, rng, eps_bar=0.5)
        monotone = check_sector_monotonicity(b, corner, ladder, samples_per_eps, rng, eps_bar=0.5)
        brackets = [r.eps_bracket[0] for r in (sector, monotone)]
        if any(x is None for x in brackets):
            raise InvalidInputError("no clean sector found for the escape-time check")
        eps_bar = min(brackets)
        logging.info(f"Escape-time check uses eps_bar={eps_bar:g}")

    eps0 = rng.uniform(eps_bar / 4.0, eps_bar, size=n_starts)
    starts = np.concatenate([sample_sector(b, corner, e, 1, rng) for e in eps0])
    theta0 = policy_logits(starts)
    bounds = 4.0 * k / (delta * eps0) * np.log(starts[:, corner] / starts[:, optimal])

    prev_ratio = theta0[:, optimal] - theta0[:, corner]
    prev_eps = eps0.copy()
    monotone_bad = np.zeros(n_starts, dtype=bool)

    def monitor(step: int, rows: NDArray[np.intp], theta: NDArray, pi: NDArray) -> NDArray[np.bool_]:
        ratio = theta[:, optimal] - theta[:, corner]
        eps = 1.0 - pi[:, corner]
        inside = in_sector(pi, optimal, corner, eps_bar)
        if step > 0:
            # only steps that stay in the sector are held to monotonicity
            worse = ((ratio < prev_ratio[rows] - MONOTONE_TOL) | (eps < prev_eps[rows] - MONOTONE_TOL)) & inside
            monotone_bad[rows[worse]] = True
        prev_ratio[rows] = ratio
        prev_eps[rows] = eps
        return ~inside

    max_time = float(bounds.max()) * 1.5 + 10 * dt
    cfg = FlowConfig(dt=dt, max_time=max_time, gate=GateSpec.eg(), stop_on_escape=True)
    rewards = np.broadcast_to(b.rewards, (n_starts, k))
    result = integrate_batch(rewards, theta0, cfg, optimal, corner, monitor=monitor)

    stop_step = np.where(result.escaped, result.escape_step, result.stopped_step)
    finished = stop_step >= 0
    tau = np.where(finished, stop_step * dt, np.inf)
    violations = ~finished | (tau > bounds + dt)
    ratios = np.where(bounds > 0, tau / np.maximum(bounds, 1e-300), np.inf)
    reasons = {
        "parity": int(np.sum(result.escaped)),
        "sector_exit": int(np.sum(~result.escaped & (result.stopped_step >= 0))),
        "horizon": int(np.sum(~finished)),
        "aborted": int(np.sum(result.aborted)),
    }
    return EscapeBoundReport(
        n_starts=n_starts,
        n_violations=int(np.sum(violations)),
        n_monotonicity_violations=int(np.sum(monotone_bad)),
        eps_bar=float(eps_bar),
        worst_ratio=float(ratios.max()),
        exit_reasons=reasons,
    )
