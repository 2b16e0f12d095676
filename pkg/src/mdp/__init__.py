"""
Tabular discounted MDPs: exact evaluation and per-state exponentiated updates.
"""

from .core import (
    EvalResult,
    MdpPolicy,
    TabularMdp,
    dg_mdp_step,
    eg_mdp_step,
    pdl_check,
    policy_eval,
    run_mdp_to_convergence,
    solve_optimal,
)

__all__ = [
    "TabularMdp",
    "MdpPolicy",
    "EvalResult",
    "policy_eval",
    "solve_optimal",
    "eg_mdp_step",
    "dg_mdp_step",
    "pdl_check",
    "run_mdp_to_convergence",
]
