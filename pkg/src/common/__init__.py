"""
Common utilities and shared components for the gated policy-gradient lab.
"""

from .constants import *
from .errors import (
    ConfigError,
    DegeneratePairError,
    GatedPGError,
    InsufficientDataError,
    InvalidInputError,
    NumericalAbortError,
    PreconditionError,
    UnsupportedError,
)
from .utils import ensure_directory, load_json_file, make_rng, save_csv_file, save_json_file, spawn_rngs
from .version import check_schema_version

__all__ = [
    "check_schema_version",
    "ensure_directory",
    "load_json_file",
    "save_json_file",
    "save_csv_file",
    "make_rng",
    "spawn_rngs",
    "GatedPGError",
    "InvalidInputError",
    "DegeneratePairError",
    "UnsupportedError",
    "InsufficientDataError",
    "PreconditionError",
    "ConfigError",
    "NumericalAbortError",
    "APP_NAME",
    "VERSION",
]
