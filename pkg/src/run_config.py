"""
Run configuration for the command-line front end.

Values come from the defaults below, then an optional JSON file, then
command-line flags; later sources win. Unknown keys are rejected.
"""

import json
import logging
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .bandit.dynamics import GateSpec
from .common.constants import (
    DEFAULT_DT,
    DEFAULT_ETA,
    DEFAULT_GAPS,
    DEFAULT_INIT_LOGITS,
    DEFAULT_MAX_TIME,
    DEFAULT_OUT_DIR,
    DEFAULT_SEED,
    DEFAULT_SWEEP_METHODS,
    DEFAULT_TOL,
    DEMO_INIT_POLICY,
    DEMO_REWARDS,
    FLOW_MAX_TIME,
    FLOW_RECORD_EVERY,
)
from .common.errors import ConfigError
from .common.version import check_schema_version
from .verify.suites import SUITES, BatterySizes

GateName = Literal["pg", "eg", "dg"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BanditSettings(_Strict):
    """Instance and starting point for ``flow``."""

    rewards: list[float] = Field(default_factory=lambda: list(DEMO_REWARDS), min_length=2)
    init_policy: list[float] | None = Field(default_factory=lambda: list(DEMO_INIT_POLICY))
    init_logits: list[float] | None = None

    @model_validator(mode="after")
    def _one_start(self) -> "BanditSettings":
        if self.init_logits is not None:
            self.init_policy = None
        start = self.init_logits if self.init_logits is not None else self.init_policy
        if start is None:
            raise ValueError("one of init_policy or init_logits is required")
        if len(start) != len(self.rewards):
            raise ValueError(f"starting point has {len(start)} entries for {len(self.rewards)} arms")
        return self


class MdpSettings(_Strict):
    """Instance and update for ``mdp-run``; ``path`` wins over the random draw."""

    path: Path | None = None
    states: int = Field(5, ge=1)
    actions: int = Field(3, ge=2)
    gamma: float = Field(0.9, ge=0.0, lt=1.0)
    min_margin: float | None = Field(0.05, ge=0.0)
    gate: Literal["eg", "dg"] = "eg"
    step: float = Field(5.0, gt=0.0)
    start: Literal["uniform", "corner"] = "uniform"
    tol: float = Field(DEFAULT_TOL, gt=0.0)
    max_iters: int = Field(100_000, ge=1)


class RunConfig(_Strict):
    """Validated configuration shared by every subcommand."""

    schema_version: str | None = None
    seed: int = Field(DEFAULT_SEED, ge=0)
    out_dir: Path = Path(DEFAULT_OUT_DIR)
    gates: list[GateName] = Field(default_factory=lambda: list(DEFAULT_SWEEP_METHODS), min_length=1)
    eta: float = Field(DEFAULT_ETA, gt=0.0)
    dt: float = Field(DEFAULT_DT, gt=0.0)
    max_time: float | None = Field(None, gt=0.0)
    record_every: int = Field(FLOW_RECORD_EVERY, ge=1)
    gaps: list[float] = Field(default_factory=lambda: list(DEFAULT_GAPS), min_length=1)
    theta0: list[float] = Field(default_factory=lambda: list(DEFAULT_INIT_LOGITS), min_length=3, max_length=3)
    bandit: BanditSettings = Field(default_factory=BanditSettings)
    mdp: MdpSettings = Field(default_factory=MdpSettings)
    suites: list[str] = Field(default_factory=lambda: list(SUITES))
    sizes: BatterySizes = Field(default_factory=BatterySizes)
    grid_points: int = Field(10_000, ge=3)

    @field_validator("gaps")
    @classmethod
    def _gaps_in_range(cls, gaps: list[float]) -> list[float]:
        if any(not 0.0 < g < 1.0 for g in gaps):
            raise ValueError("gaps must lie in (0, 1)")
        return gaps

    @field_validator("suites")
    @classmethod
    def _known_suites(cls, suites: list[str]) -> list[str]:
        unknown = sorted(set(suites) - set(SUITES))
        if unknown:
            raise ValueError(f"unknown suites {unknown}, expected a subset of {list(SUITES)}")
        return suites

    def gate_specs(self) -> list[GateSpec]:
        return [GateSpec.parse(name, self.eta) for name in self.gates]

    def flow_max_time(self) -> float:
        return self.max_time if self.max_time is not None else FLOW_MAX_TIME

    def sweep_max_time(self) -> float:
        return self.max_time if self.max_time is not None else DEFAULT_MAX_TIME


def _field_of(error: ValidationError) -> str:
    first = error.errors()[0]
    return ".".join(str(part) for part in first["loc"]) or "<root>"


def load_run_config(path: Path | None = None, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Build the run configuration.

    Args:
        path: Optional JSON document
        overrides: Values from command-line flags; ``None`` entries are ignored

    Returns:
        Validated configuration

    Raises:
        ConfigError: On unreadable files, unknown keys or invalid values,
            naming the offending field
    """
    data: dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}", field="config")
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object", field="config")
        check_schema_version(data, source=str(path))
        logging.info(f"Loaded run configuration from {path}")

    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        field = _field_of(e)
        raise ConfigError(f"invalid configuration at '{field}': {e.errors()[0]['msg']}", field=field)
