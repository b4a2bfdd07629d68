"""Experiment configuration: a closed JSON schema with explicit seeds.

Every run is fully described by one document; unknown keys are hard
errors and no field ever defaults to wall-clock entropy. The JSON keys
(``N``, ``lambda``, ...) are the on-disk contract; Python-side names
differ where the key is a reserved word.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ota_fedsim import channel as channel_mod
from ota_fedsim import geometry
from ota_fedsim.errors import ConfigError

_STRICT = ConfigDict(extra="forbid", populate_by_name=True)


class SeedsConfig(BaseModel):
    model_config = _STRICT

    data: int
    init: int
    channel: int


class ConstraintConfig(BaseModel):
    """Exactly one of a ball radius or a pair of box bounds."""

    model_config = _STRICT

    ball_radius: Optional[float] = None
    box_lower: Optional[list[float]] = None
    box_upper: Optional[list[float]] = None

    @model_validator(mode="after")
    def _one_kind(self):
        has_ball = self.ball_radius is not None
        has_box = self.box_lower is not None or self.box_upper is not None
        if has_ball == has_box:
            raise ValueError("constraint must set either ball_radius or box_lower/box_upper")
        if has_box and (self.box_lower is None or self.box_upper is None):
            raise ValueError("box constraint needs both box_lower and box_upper")
        return self

    def build(self, dim: int) -> geometry.ConstraintSet:
        if self.ball_radius is not None:
            return geometry.L2Ball(radius=self.ball_radius)
        if len(self.box_lower) != dim or len(self.box_upper) != dim:
            raise ConfigError(f"box bounds must have {dim} coordinates")
        return geometry.Box(lower=self.box_lower, upper=self.box_upper)


class ScheduleConfig(BaseModel):
    """Diminishing step scale; omit eta_c to use min(1, 1/L) from the data."""

    model_config = _STRICT

    eta_c: Optional[float] = None

    @model_validator(mode="after")
    def _positive(self):
        if self.eta_c is not None and self.eta_c <= 0:
            raise ValueError(f"eta_c must be positive, got {self.eta_c}")
        return self


_CHANNEL_PARAM_KEYS = {
    "uniform": {"lo", "hi"},
    "rayleigh": {"scale"},
    "lognormal": {"mu_log", "sigma_log"},
}


class ChannelConfig(BaseModel):
    model_config = _STRICT

    dist: Literal["uniform", "rayleigh", "lognormal"]
    params: dict[str, float]

    @model_validator(mode="after")
    def _exact_params(self):
        expected = _CHANNEL_PARAM_KEYS[self.dist]
        got = set(self.params)
        if got != expected:
            raise ValueError(f"channel dist {self.dist!r} takes params {sorted(expected)}, got {sorted(got)}")
        return self

    def build_distribution(self) -> channel_mod.Distribution:
        if self.dist == "uniform":
            return channel_mod.UniformPositive(lo=self.params["lo"], hi=self.params["hi"])
        if self.dist == "rayleigh":
            return channel_mod.Rayleigh(scale=self.params["scale"])
        return channel_mod.LogNormal(mu_log=self.params["mu_log"], sigma_log=self.params["sigma_log"])


class ExperimentConfig(BaseModel):
    model_config = _STRICT

    protocol: Literal["fedcota", "fedavg"]
    n_agents: int = Field(alias="N", ge=1)
    m: int = Field(ge=1)
    samples_per_agent: int = Field(ge=1)
    loss: Literal["logistic", "quadratic"]
    lam: float = Field(alias="lambda", default=0.0001, ge=0.0, le=1.0)
    constraint: ConstraintConfig
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    channel: ChannelConfig = Field(
        default_factory=lambda: ChannelConfig(dist="uniform", params={"lo": 0.5, "hi": 1.5})
    )
    rounds: int = Field(ge=0)
    seeds: SeedsConfig
    output: Optional[str] = None

    @model_validator(mode="after")
    def _coherent(self):
        if self.loss == "logistic" and self.m < 2:
            raise ValueError("logistic runs need m >= 2 (at least one feature plus the bias)")
        if self.loss == "logistic" and (self.n_agents * self.samples_per_agent) < 2:
            raise ValueError("logistic runs need at least two samples in total")
        return self

    def build_constraint(self) -> geometry.ConstraintSet:
        return self.constraint.build(self.m)

    def build_channel(self) -> channel_mod.ChannelModel:
        return channel_mod.ChannelModel(dist=self.channel.build_distribution(), seed=self.seeds.channel)

    def to_json(self) -> str:
        return json.dumps(self.model_dump(by_alias=True, exclude_none=True), indent=2)


def parse_config(payload: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(payload)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config file; unknown keys are rejected."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return parse_config(payload)
