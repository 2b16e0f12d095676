"""
Main entry point for the gated policy-gradient lab.

Subcommands:
1. flow - integrate the gated logit flow on a bandit and record the trajectory
2. sweep - escape time against the optimality gap
3. mdp-run - exponentiated updates on a tabular MDP until convergence
4. verify - run the verification batteries
5. counterexample - drift curves and fixed points of the shared-parameter MDP
"""

import functools
import logging
import math
import sys
from collections.abc import Callable
from pathlib import Path
from typing import Any

import click
import numpy as np
import pandas as pd
from dotenv import load_dotenv

from . import counterexample as cx
from .bandit.core import BanditInstance, policy_logits, softmax
from .bandit.dynamics import GateKind, GateSpec
from .bandit.flow_sim import FlowConfig, default_corner, escape_scaling_exponent, gap_sweep, integrate
from .common.constants import (
    APP_NAME,
    COUNTEREXAMPLE_GRID_FILE,
    COUNTEREXAMPLE_REPORT_FILE,
    ENV_OUT_DIR,
    ENV_SEED,
    EXIT_CONFIG_ERROR,
    EXIT_NUMERICAL_ABORT,
    EXIT_OK,
    EXIT_VERIFICATION_FAILED,
    FLOW_FILE_TEMPLATE,
    FLOW_SUMMARY_FILE,
    LOG_FILE,
    LOG_FORMAT,
    LOG_LEVEL,
    MDP_RUN_FILE,
    MDP_SUMMARY_FILE,
    REPORT_SCHEMA_VERSION,
    SWEEP_FILE,
    SWEEP_SUMMARY_FILE,
    VERIFY_REPORT_FILE,
    VERSION,
)
from .common.errors import ConfigError, GatedPGError, InvalidInputError, NumericalAbortError
from .common.utils import ensure_directory, make_rng, save_csv_file, save_json_file
from .mdp.core import (
    MdpPolicy,
    TabularMdp,
    check_mdp_telescope,
    make_dg_mdp_stepper,
    make_eg_mdp_stepper,
    run_mdp_to_convergence,
    solve_optimal,
)
from .run_config import RunConfig, load_run_config
from .verify.suites import SUITES, run_suites
from .verify.theory import bracket_epsilon0, fit_rate, in_sector

# Load environment variables from .env file
load_dotenv()


def setup_logging(out_dir: Path, debug: bool = False) -> None:
    """
    Set up logging configuration.

    Args:
        out_dir: Directory receiving the log file
        debug: Enable debug logging
    """
    ensure_directory(out_dir)
    level = logging.DEBUG if debug else getattr(logging, LOG_LEVEL.upper())
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(out_dir / LOG_FILE, encoding="utf-8"),
            logging.StreamHandler(sys.stdout),
        ],
        force=True,
    )


def build_report(config: RunConfig, result: dict[str, Any]) -> dict[str, Any]:
    """Wrap a result with the configuration, seed and tool version."""
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "tool": APP_NAME,
        "version": VERSION,
        "seed": config.seed,
        "config": config.model_dump(mode="json"),
        "result": result,
    }


def _write_json(path: Path, data: dict[str, Any]) -> None:
    if not save_json_file(path, data):
        raise click.ClickException(f"could not write {path}")


def _write_csv(path: Path, table: pd.DataFrame) -> None:
    if not save_csv_file(path, table):
        raise click.ClickException(f"could not write {path}")


def run_options(command: Callable) -> Callable:
    """Options shared by every subcommand, resolved into a RunConfig."""

    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
                  help="JSON run configuration")
    @click.option("--seed", type=int, envvar=ENV_SEED, help=f"Random seed (or set {ENV_SEED})")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False, path_type=Path), envvar=ENV_OUT_DIR,
                  help=f"Output directory (or set {ENV_OUT_DIR})")
    @click.option("--gate", "gates", multiple=True, help="Gate to run (pg, eg or dg); repeat for several")
    @click.option("--eta", type=float, help="DG temperature")
    @click.option("--dt", type=float, help="Euler step")
    @click.option("--max-time", type=float, help="Integration horizon")
    @click.option("--debug", is_flag=True, help="Enable debug logging")
    @functools.wraps(command)
    def wrapper(config_path, seed, out_dir, gates, eta, dt, max_time, debug, **kwargs):
        overrides = {
            "seed": seed,
            "out_dir": str(out_dir) if out_dir is not None else None,
            "gates": list(gates) or None,
            "eta": eta,
            "dt": dt,
            "max_time": max_time,
        }
        try:
            config = load_run_config(config_path, overrides)
        except ConfigError as e:
            click.echo(f"Configuration error: {e}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)

        setup_logging(config.out_dir, debug)
        logging.info(f"Starting {APP_NAME} v{VERSION}: {command.__name__} (seed={config.seed})")
        try:
            code = command(config, **kwargs)
        except (ConfigError, InvalidInputError) as e:
            logging.error(f"Invalid input: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except NumericalAbortError as e:
            logging.error(f"Numerical abort at step {e.step}: {e}", exc_info=True)
            click.echo(f"Numerical abort: {e}", err=True)
            sys.exit(EXIT_NUMERICAL_ABORT)
        sys.exit(code)

    return wrapper


@click.group()
@click.version_option(VERSION, prog_name=APP_NAME)
def cli():
    """Gated policy-gradient flows, discrete updates and their verification."""


def _flow_frame(traj, n_arms: int) -> pd.DataFrame:
    columns: dict[str, Any] = {"time": traj.times}
    columns.update({f"theta_{i}": traj.thetas[:, i] for i in range(n_arms)})
    columns.update({f"pi_{i}": traj.pis[:, i] for i in range(n_arms)})
    columns["value"] = traj.values
    return pd.DataFrame(columns)


def sector_escape_bound(
    b: BanditInstance, pi0: np.ndarray, corner: int, rng: np.random.Generator
) -> float | None:
    """
    First-exit bound ``4K / (gap eps0) log(pi0(corner) / pi0(opt))`` for an EG start.

    The sector radius is the bracketed clean ``eps`` of the EG drift bound
    for this corner; starts outside that sector get no bound.
    """
    optimal = b.optimal
    if corner == optimal or b.gap(optimal, corner) <= 0.0 or not in_sector(pi0, optimal, corner, 1.0):
        return None
    eps_bar, _ = bracket_epsilon0(b, corner, GateSpec.eg(), rng)
    if eps_bar is None or not in_sector(pi0, optimal, corner, eps_bar):
        logging.info(f"Start lies outside the clean EG sector (eps_bar={eps_bar}); no escape bound")
        return None
    eps0 = 1.0 - pi0[corner]
    return 4.0 * b.n_arms / (b.gap(optimal, corner) * eps0) * math.log(pi0[corner] / pi0[optimal])


@cli.command()
@run_options
def flow(config: RunConfig) -> int:
    """Integrate the logit flow for each gate from one starting point."""
    settings = config.bandit
    b = BanditInstance(np.array(settings.rewards))
    if settings.init_logits is not None:
        theta0 = np.array(settings.init_logits)
    else:
        theta0 = policy_logits(np.array(settings.init_policy))
    pi0 = softmax(theta0)
    corner = default_corner(b, theta0)

    summary: dict[str, Any] = {"optimal": b.optimal, "corner": corner, "gates": {}}
    for gate in config.gate_specs():
        cfg = FlowConfig(dt=config.dt, max_time=config.flow_max_time(), gate=gate, record_every=config.record_every)
        traj = integrate(b, theta0, cfg, corner=corner)
        _write_csv(config.out_dir / FLOW_FILE_TEMPLATE.format(gate=gate.label), _flow_frame(traj, b.n_arms))
        entry = {
            "escaped": traj.escaped,
            "escape_time": traj.escape_time,
            "final_pi": traj.final_pi.tolist(),
            "records": len(traj),
        }
        if gate.kind is GateKind.EG:
            entry["escape_bound"] = sector_escape_bound(b, pi0, corner, make_rng(config.seed))
        summary["gates"][gate.label] = entry
        logging.info(f"Flow {gate.label}: escaped={traj.escaped}, escape_time={traj.escape_time}")

    _write_json(config.out_dir / FLOW_SUMMARY_FILE, build_report(config, summary))
    return EXIT_OK


@cli.command()
@run_options
def sweep(config: RunConfig) -> int:
    """Escape time against the gap for rewards (1, 1 - gap, 0)."""
    cfg = FlowConfig(dt=config.dt, max_time=config.sweep_max_time())
    gates = config.gate_specs()
    table = gap_sweep(config.gaps, config.theta0, gates, cfg)
    _write_csv(config.out_dir / SWEEP_FILE, table)

    slopes = {}
    for gate in gates:
        slopes[gate.label] = {
            "slope_all": escape_scaling_exponent(table, gate.label),
            "slope_last4": escape_scaling_exponent(table, gate.label, last_n=4),
        }
    summary = {
        "rows": len(table),
        "escaped_rows": int(table["escaped"].sum()),
        "slopes": slopes,
    }
    _write_json(config.out_dir / SWEEP_SUMMARY_FILE, build_report(config, summary))
    logging.info(f"Sweep finished: {slopes}")
    return EXIT_OK


@cli.command("mdp-run")
@run_options
def mdp_run(config: RunConfig) -> int:
    """Run an exponentiated update on a tabular MDP until it converges."""
    settings = config.mdp
    rng = make_rng(config.seed)
    if settings.path is not None:
        m = TabularMdp.from_json(settings.path)
    else:
        m = TabularMdp.random(rng, settings.states, settings.actions, settings.gamma, settings.min_margin)

    if settings.start == "corner":
        corner = (solve_optimal(m).actions + 1) % m.n_actions
        pol0 = MdpPolicy.corner(m, corner)
    else:
        pol0 = MdpPolicy.uniform(m)
    if settings.gate == "eg":
        stepper = make_eg_mdp_stepper(settings.step)
    else:
        stepper = make_dg_mdp_stepper(settings.step, config.eta)

    run = run_mdp_to_convergence(m, pol0, stepper, tol=settings.tol, max_iters=settings.max_iters)
    table = pd.DataFrame(
        {
            "iteration": np.arange(run.deltas.size),
            "objective": run.objectives,
            "delta": run.deltas,
            "d_min": run.d_min,
            "pi_opt_min": run.pi_opt_min,
        }
    )
    _write_csv(config.out_dir / MDP_RUN_FILE, table)

    summary: dict[str, Any] = {
        "states": m.n_states,
        "actions": m.n_actions,
        "gamma": m.gamma,
        "iterations": run.iterations,
        "converged": run.converged,
        "max_tv": run.max_tv,
        "optimal_actions": run.optimal.actions.tolist(),
    }
    if settings.gate == "eg":
        telescope = check_mdp_telescope(run, settings.step, m.gamma, m.r_max)
        summary["telescope"] = {"checked": telescope.n_checked, "violations": telescope.n_violations}
    try:
        rate = fit_rate(run.deltas[run.deltas > 0.0])
        summary["rate"] = {"slope": rate.slope, "r_squared": rate.r_squared, "t0": rate.t0_estimate}
    except GatedPGError as e:
        logging.warning(f"Rate fit skipped: {e}")
        summary["rate"] = None
    _write_json(config.out_dir / MDP_SUMMARY_FILE, build_report(config, summary))
    return EXIT_OK


@cli.command()
@click.option("--suite", "suite_names", multiple=True,
              help="Suite to run: bandit, mdp, counterexample or all (default: the configured list)")
@run_options
def verify(config: RunConfig, suite_names: tuple[str, ...]) -> int:
    """Run the verification batteries and write a JSON report."""
    names = list(config.suites)
    if suite_names and "all" not in suite_names:
        unknown = sorted(set(suite_names) - set(SUITES))
        if unknown:
            raise ConfigError(f"unknown suites {unknown}", field="suite")
        names = list(suite_names)
    reports = run_suites(names, config.sizes, config.seed)
    result = {r.suite: r.to_dict() for r in reports}
    failed = [f"{r.suite}/{name}" for r in reports for name in r.failed()]
    result["failed"] = failed
    _write_json(config.out_dir / VERIFY_REPORT_FILE, build_report(config, result))
    if failed:
        logging.error(f"Verification failed: {failed}")
        click.echo(f"Verification failed: {', '.join(failed)}", err=True)
        return EXIT_VERIFICATION_FAILED
    click.echo("All checks passed")
    return EXIT_OK


@cli.command()
@run_options
def counterexample(config: RunConfig) -> int:
    """Drift curves and fixed points of the shared-parameter two-state MDP."""
    _write_csv(config.out_dir / COUNTEREXAMPLE_GRID_FILE, cx.drift_grid(config.grid_points, config.eta))
    gates = [GateSpec.pg(), GateSpec.eg(), GateSpec.dg(config.eta)]
    result = {
        "fixed_points": {g.label: cx.find_fixed_points(g).to_dict() for g in gates},
        "dg_temperature_sweep": {f"{eta:g}": r.to_dict() for eta, r in cx.sweep_dg_temperatures().items()},
        "sign_conflict_ablation": cx.sign_conflict_ablation().to_dict(),
    }
    _write_json(config.out_dir / COUNTEREXAMPLE_REPORT_FILE, build_report(config, result))
    return EXIT_OK


def main() -> int:
    """Console entry point."""
    return cli(standalone_mode=True)


if __name__ == "__main__":
    main()
