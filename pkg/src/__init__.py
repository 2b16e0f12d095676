"""
Gated policy-gradient lab.

Continuous-time flows and discrete exponentiated updates for vanilla (PG),
hard-gated (EG) and delight-gated (DG) policy gradients on bandits and
tabular MDPs, together with the numerical checks of their escape and
convergence guarantees.
"""

__version__ = "0.2.0"
__author__ = "Gated PG Development Team"
__description__ = "Gated policy-gradient flows, discrete updates and verification batteries"

from .common.constants import APP_NAME, VERSION

__all__ = [
    "APP_NAME",
    "VERSION",
]
