"""Configuration management for recsim."""

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError, UnknownModel, UnknownPlatform
from .models import (
    AcceleratorSpec,
    ArrivalProcess,
    CpuPlatformSpec,
    ModelSpec,
    ProductionHeavyTail,
    SizeDistribution,
    SlaLevel,
    TraceParams,
)
from .platform import accelerator, cpu_platform
from .tuner import BATCH_LADDER
from .zoo import SLA_SCALE, builtin_model, sla_target


@dataclass
class Config:
    """Process-level settings read from the environment."""

    log_level: str = "INFO"
    workers: int = 1
    seed_override: int | None = None

    @classmethod
    def from_env(cls) -> "Config":
        """Create config from environment variables."""
        # Get default values from dataclass fields
        fields = cls.__dataclass_fields__

        return cls(
            log_level=os.getenv("RECSIM_LOG_LEVEL", str(fields["log_level"].default)).upper(),
            workers=_int_env("RECSIM_WORKERS") or fields["workers"].default,
            seed_override=_int_env("RECSIM_SEED"),
        )


def _int_env(name: str) -> int | None:
    raw = os.getenv(name)
    if not raw:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} environment variable must be an integer, got '{raw}'") from None


class ExperimentConfig(BaseModel):
    """One experiment: what to serve, on which hardware, under which target."""

    model_config = ConfigDict(extra="forbid")

    version: Literal[1] = 1
    model: str | ModelSpec = Field(default="DLRM-RMC1", description="Zoo name or inline model")
    cpu: str | CpuPlatformSpec = "skylake"
    accelerator: str | AcceleratorSpec | None = None
    sla: SlaLevel | float = Field(default="medium", description="SLA level or explicit p95 seconds")
    distribution: SizeDistribution = Field(default_factory=ProductionHeavyTail)
    arrival: ArrivalProcess = "poisson"
    base_seed: int = Field(default=0, ge=0)
    trace_length: int = Field(default=50_000, ge=1)
    replicates: int = Field(default=3, ge=1)
    warmup_fraction: float = Field(default=0.1, ge=0, le=0.5)
    sla_horizon: float = Field(default=0.0, ge=0, description="Minimum trace span in SLA windows; 0 keeps trace_length")
    batch_grid: list[int] = Field(default_factory=lambda: list(BATCH_LADDER), min_length=1)
    threshold_grid: list[int | None] = Field(default_factory=lambda: [None], min_length=1)
    report_models: list[str | ModelSpec] = Field(default_factory=list, description="Report scope; empty means [model]")
    report_slas: list[SlaLevel] = Field(default_factory=lambda: ["low", "medium", "high"], min_length=1)

    def resolve_model(self, entry: str | ModelSpec | None = None) -> ModelSpec:
        entry = self.model if entry is None else entry
        if isinstance(entry, ModelSpec):
            return entry
        try:
            return builtin_model(entry)
        except UnknownModel as e:
            raise ConfigError(str(e)) from None

    def resolve_cpu(self) -> CpuPlatformSpec:
        if isinstance(self.cpu, CpuPlatformSpec):
            return self.cpu
        try:
            return cpu_platform(self.cpu)
        except UnknownPlatform as e:
            raise ConfigError(str(e)) from None

    def resolve_accelerator(self) -> AcceleratorSpec | None:
        if self.accelerator is None or isinstance(self.accelerator, AcceleratorSpec):
            return self.accelerator
        try:
            return accelerator(self.accelerator)
        except UnknownPlatform as e:
            raise ConfigError(str(e)) from None

    def models_for_report(self) -> list[ModelSpec]:
        return [self.resolve_model(m) for m in self.report_models or [self.model]]

    def sla_seconds(self, model: ModelSpec, level: SlaLevel | None = None) -> float:
        """p95 target in seconds. Explicit seconds act as the medium target when a level is asked for."""
        if isinstance(self.sla, float):
            return self.sla * (SLA_SCALE[level] if level else 1.0)
        try:
            return sla_target(model.name, level or str(self.sla))
        except UnknownModel as e:
            raise ConfigError(f"{e}; set 'sla' to explicit seconds") from None

    def trace_params(self) -> TraceParams:
        return TraceParams(
            distribution=self.distribution,
            trace_length=self.trace_length,
            base_seed=self.base_seed,
            replicates=self.replicates,
            arrival=self.arrival,
            warmup_fraction=self.warmup_fraction,
            sla_horizon=self.sla_horizon,
        )

    def with_overrides(self, config: Config) -> "ExperimentConfig":
        """Apply environment overrides such as RECSIM_SEED."""
        if config.seed_override is None:
            return self
        return self.model_copy(update={"base_seed": config.seed_override})


def load_experiment(path: str | Path) -> ExperimentConfig:
    """Read and validate an experiment config JSON file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid config {path}: {e}") from e


def dump_experiment(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(cfg.model_dump_json(indent=2) + "\n", encoding="utf-8")
