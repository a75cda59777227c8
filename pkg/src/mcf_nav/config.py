"""Configuration management for mcf-nav runs."""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, ParameterError
from .gaussfuse import GatingSchedule

logger = logging.getLogger("mcf_nav")

TrainMode = Literal["mcf", "e2e", "demo_buffer", "no_gating"]
Method = Literal["mcf", "policy_only", "policy_member", "prior", "random"]

_STRICT = ConfigDict(extra="forbid")


class GatingConfig(BaseModel):
    """Reverse-logistic gating schedule, expressed relative to the run length."""

    model_config = _STRICT

    midpoint_fraction: float = Field(default=0.4, gt=0.0, lt=1.0)
    steepness_scale: float = Field(default=10.0, gt=0.0)
    fixed_alpha: float | None = Field(default=None, ge=0.0, le=1.0)

    def schedule(self, total_steps: int) -> GatingSchedule:
        return GatingSchedule(
            midpoint_step=min(max(1, round(self.midpoint_fraction * total_steps)), total_steps - 1),
            steepness=self.steepness_scale / total_steps,
            total_steps=total_steps,
        )


class ApfConfig(BaseModel):
    """Potential-field prior gains and its uncertainty model."""

    model_config = _STRICT

    k_att: float = Field(default=1.0, gt=0.0)
    k_rep: float = Field(default=0.25, gt=0.0)
    influence_radius: float = Field(default=1.0, gt=0.0)
    k_heading: float = Field(default=2.0, gt=0.0)
    slowdown_radius: float = Field(default=0.5, gt=0.0)
    mc_samples: int = Field(default=32, ge=2)
    sensor_sigma: float = Field(default=0.01, ge=0.0)
    variance_floor_c: float = Field(default=0.2, ge=0.0)
    train_sigma: float = Field(default=0.3, gt=0.0)


class SacConfig(BaseModel):
    """Soft actor-critic hyperparameters."""

    model_config = _STRICT

    hidden_sizes: list[int] = Field(default_factory=lambda: [64, 64])
    gamma: float = Field(default=0.99, gt=0.0, lt=1.0)
    polyak: float = Field(default=0.995, ge=0.0, le=1.0)
    lr: float = Field(default=3e-4, gt=0.0)
    batch_size: int = Field(default=128, ge=1)
    buffer_capacity: int = Field(default=100_000, ge=1)
    alpha_entropy: float = Field(default=0.2, gt=0.0)
    update_after: int = Field(default=1000, ge=0)
    update_every: int = Field(default=1, ge=1)

    @field_validator("hidden_sizes")
    @classmethod
    def validate_hidden_sizes(cls, v: list[int]) -> list[int]:
        if not v or any(size < 1 for size in v):
            raise ValueError("hidden_sizes must be a non-empty list of positive integers")
        return v


class TrainConfig(BaseModel):
    """Training-suite settings."""

    model_config = _STRICT

    modes: list[TrainMode] = Field(default_factory=lambda: ["mcf"])
    total_steps: int = Field(default=50_000, gt=0)
    eval_every_episodes: int = Field(default=5, ge=1)
    eval_episodes: int = Field(default=10, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [0])
    arenas: list[str] = Field(default_factory=lambda: ["open", "scattered", "dead_end"])
    demo_episodes: int = Field(default=20, ge=0)
    heatmap_episodes: int = Field(default=20, ge=0)
    heatmap_resolution: float = Field(default=5.0, gt=0.0)
    snapshot_every: int = Field(default=1000, ge=1)
    max_episodes: int | None = Field(default=None, ge=0)
    fixed_episode_seed: int | None = None
    record_exploration: bool = False

    @field_validator("seeds", "arenas", "modes")
    @classmethod
    def validate_non_empty(cls, v: list[Any]) -> list[Any]:
        if not v:
            raise ValueError("must not be empty")
        return v


class DeployConfig(BaseModel):
    """Deployment-time fusion settings."""

    model_config = _STRICT

    ensemble_epsilon: float = Field(default=1e-6, gt=0.0)
    deterministic: bool = True
    stagnation_gap: float = Field(default=1.0, ge=0.0)
    stagnation_var: float = Field(default=0.05, gt=0.0)


class EvalConfig(BaseModel):
    """Table-style evaluation settings."""

    model_config = _STRICT

    methods: list[Method] = Field(
        default_factory=lambda: ["mcf", "policy_only", "prior", "random"]
    )
    episodes: int = Field(default=50, ge=1)
    seeds: list[int] = Field(default_factory=lambda: [1000])
    train_arenas: list[str] = Field(default_factory=lambda: ["open", "scattered", "dead_end"])
    unseen_arenas: list[str] = Field(default_factory=lambda: ["unseen"])
    grid_resolution: float = Field(default=20.0, gt=0.0)


class LoggingConfig(BaseModel):
    """Logging configuration."""

    model_config = _STRICT

    level: str = "info"

    @field_validator("level")
    @classmethod
    def validate_level(cls, v: str) -> str:
        if v.lower() not in {"debug", "info", "warn", "warning", "error"}:
            raise ValueError(f"unknown log level: {v}")
        return v.lower()


class RunConfig(BaseModel):
    """Main configuration: one section per module."""

    model_config = _STRICT

    train: TrainConfig = Field(default_factory=TrainConfig)
    gating: GatingConfig = Field(default_factory=GatingConfig)
    sac: SacConfig = Field(default_factory=SacConfig)
    apf: ApfConfig = Field(default_factory=ApfConfig)
    deploy: DeployConfig = Field(default_factory=DeployConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def validate_batch_fits_buffer(self) -> "RunConfig":
        if self.sac.batch_size > self.sac.buffer_capacity:
            raise ValueError("sac.batch_size cannot exceed sac.buffer_capacity")
        return self

    @model_validator(mode="after")
    def validate_gating_schedule(self) -> "RunConfig":
        if self.train.total_steps < 2:
            raise ValueError(
                f"train.total_steps must be at least 2 to place the gate midpoint inside the run, "
                f"got {self.train.total_steps}"
            )
        try:
            self.gating.schedule(self.train.total_steps)
        except ParameterError as e:
            raise ValueError(f"gating schedule is invalid for {self.train.total_steps} steps: {e}") from e
        return self


def format_validation_error(error: ValidationError) -> str:
    """Render pydantic errors as ``a.b.c: message`` lines."""
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "\n".join(lines)


def load_config(path: Path | None = None) -> RunConfig:
    """Load a run configuration from a JSON file (defaults when ``path`` is None)."""
    if path is None:
        return RunConfig()

    if not path.exists():
        raise ConfigError(f"Configuration file not found: {path}")

    try:
        with path.open(encoding="utf-8") as f:
            config_data: dict[str, Any] = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"Invalid JSON in configuration file {path} (line {e.lineno}, column {e.colno}): {e.msg}"
        ) from e

    if not isinstance(config_data, dict):
        raise ConfigError(f"Configuration file {path} must contain a JSON object")

    try:
        return RunConfig(**config_data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration in {path}:\n{format_validation_error(e)}") from e


def config_hash(config: RunConfig) -> str:
    """Short, stable hash of the effective configuration."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
