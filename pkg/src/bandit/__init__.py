"""
K-armed bandit instances, gated logit flows and exponentiated discrete updates.
"""

from .core import BanditInstance, advantages, classify_arms, softmax, surprisal
from .discrete_update import dg_step, eg_step, run_to_convergence
from .dynamics import GateKind, GateSpec, drift, logit_gap
from .flow_sim import FlowConfig, TrajectoryRecord, gap_sweep, integrate

__all__ = [
    "BanditInstance",
    "advantages",
    "classify_arms",
    "softmax",
    "surprisal",
    "GateKind",
    "GateSpec",
    "drift",
    "logit_gap",
    "FlowConfig",
    "TrajectoryRecord",
    "integrate",
    "gap_sweep",
    "eg_step",
    "dg_step",
    "run_to_convergence",
]
