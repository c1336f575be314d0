"""Data models for recsim."""

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Annotated, Any, Literal

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

# Model zoo


class OpCategory(str, Enum):
    """Operator categories used for work and time accounting."""

    DENSE_FC = "DenseFC"
    PREDICT_FC = "PredictFC"
    EMBEDDING_LOOKUP = "EmbeddingLookup"
    POOLING = "Pooling"
    ATTENTION = "Attention"
    RECURRENT = "Recurrent"
    INTERACTION = "Interaction"


FC_CATEGORIES = frozenset({OpCategory.DENSE_FC, OpCategory.PREDICT_FC})


class Pooling(str, Enum):
    """Sparse feature pooling applied to looked-up embedding vectors."""

    SUM = "Sum"
    CONCAT = "Concat"
    ATTENTION_FC = "AttentionFC"
    ATTENTION_RNN = "AttentionRNN"


class LayerStack(BaseModel):
    """Ordered output widths of a stack of fully-connected layers."""

    model_config = ConfigDict(frozen=True)

    dims: tuple[int, ...] = Field(min_length=1, description="Output width of each layer, input first")

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v: tuple[int, ...]) -> tuple[int, ...]:
        if any(d < 1 for d in v):
            raise ValueError(f"layer widths must be >= 1, got {list(v)}")
        return v

    @property
    def output_dim(self) -> int:
        return self.dims[-1]


class EmbeddingConfig(BaseModel):
    """Embedding tables and the pooling that combines their lookups."""

    model_config = ConfigDict(frozen=True)

    num_tables: int = Field(ge=0)
    lookups_per_table: int = Field(ge=0)
    embedding_dim: int = Field(ge=8, le=256, description="Latent vector length")
    pooling: Pooling

    @model_validator(mode="after")
    def validate_lookups(self) -> "EmbeddingConfig":
        if self.num_tables > 0 and self.lookups_per_table < 1:
            raise ValueError("lookups_per_table must be >= 1 when tables are present")
        return self


class ModelSpec(BaseModel):
    """Parametric description of one recommendation model architecture."""

    model_config = ConfigDict(frozen=True)

    name: str
    dense_fc: LayerStack | None = Field(default=None, description="Bottom MLP over dense features")
    predict_fc: LayerStack = Field(description="Top MLP producing the click-through rate")
    num_parallel_predict_stacks: int = Field(default=1, ge=1)
    embeddings: EmbeddingConfig
    dense_input_dim: int = Field(default=0, ge=0)
    recurrent_hidden_dim: int | None = Field(default=None, ge=1, description="GRU width for AttentionRNN pooling")

    @model_validator(mode="after")
    def validate_recurrent(self) -> "ModelSpec":
        if self.embeddings.pooling is Pooling.ATTENTION_RNN and self.recurrent_hidden_dim is None:
            raise ValueError("AttentionRNN pooling requires recurrent_hidden_dim")
        return self


class OpWork(BaseModel):
    """Floating point operations and bytes moved by one operator category."""

    model_config = ConfigDict(frozen=True)

    flops: int = Field(default=0, ge=0)
    nbytes: int = Field(default=0, ge=0)


class WorkBreakdown(BaseModel):
    """Per-category work of a model at a given batch size."""

    model_config = ConfigDict(frozen=True)

    batch: int = Field(ge=1)
    categories: dict[OpCategory, OpWork]

    @property
    def total_flops(self) -> int:
        return sum(w.flops for w in self.categories.values())

    @property
    def total_bytes(self) -> int:
        return sum(w.nbytes for w in self.categories.values())


# Platforms


class CpuPlatformSpec(BaseModel):
    """Roofline cost and power model of a multi-core CPU server."""

    model_config = ConfigDict(frozen=True)

    name: str
    cores: int = Field(ge=1)
    flops_per_core_peak: float = Field(gt=0, description="Peak flop/s of one core")
    simd_eff_floor: float = Field(gt=0, le=1, description="SIMD efficiency at batch 0 (epsilon_0)")
    simd_saturation_batch: int = Field(ge=1, description="Batch at which SIMD efficiency reaches 1")
    mem_bandwidth_total: float = Field(gt=0, description="Socket memory bandwidth in bytes/s")
    contention_coeff: float = Field(ge=0, description="Slowdown of memory traffic with all cores active (eta)")
    tdp: float = Field(gt=0, description="Thermal design power in watts")


class AcceleratorSpec(BaseModel):
    """Cost and power model of an offload accelerator."""

    model_config = ConfigDict(frozen=True)

    name: str
    flops_peak: float = Field(gt=0)
    mem_bandwidth: float = Field(gt=0)
    transfer_fixed: float = Field(gt=0, description="Fixed host-to-device cost per query in seconds")
    transfer_per_byte: float = Field(gt=0, description="Seconds per transferred input byte")
    power: float = Field(gt=0, description="Board power in watts")


class ServiceTime(BaseModel):
    """Modeled execution time of one request, split by operator category."""

    total: float = Field(ge=0)
    breakdown: dict[OpCategory, float]
    transfer: float = Field(default=0.0, ge=0)

    def shares(self) -> dict[OpCategory, float]:
        compute = self.total - self.transfer
        if compute <= 0:
            return {cat: 0.0 for cat in self.breakdown}
        return {cat: t / compute for cat, t in self.breakdown.items()}


# Load generation


class _SizeDistributionBase(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_size: int = Field(default=1000, ge=1, description="Clamp ceiling for sampled sizes")

    def parameters(self) -> dict[str, float]:
        return {k: float(v) for k, v in self.model_dump(exclude={"kind"}).items()}


class FixedSize(_SizeDistributionBase):
    kind: Literal["fixed"] = "fixed"
    size: float = 25


class NormalSize(_SizeDistributionBase):
    kind: Literal["normal"] = "normal"
    mu: float = 50.0
    sigma: float = 20.0


class LogNormalSize(_SizeDistributionBase):
    kind: Literal["lognormal"] = "lognormal"
    mu: float = math.log(30)
    sigma: float = 0.5


class ProductionHeavyTail(_SizeDistributionBase):
    """LogNormal body mixed with a Pareto tail starting at the body median."""

    kind: Literal["production"] = "production"
    body_mu: float = math.log(30)
    body_sigma: float = 0.5
    tail_alpha: float = 1.1
    tail_weight: float = 0.12

    def body(self) -> LogNormalSize:
        """The tail-free LogNormal sharing this distribution's body."""
        return LogNormalSize(mu=self.body_mu, sigma=self.body_sigma, max_size=self.max_size)


SizeDistribution = Annotated[
    FixedSize | NormalSize | LogNormalSize | ProductionHeavyTail,
    Field(discriminator="kind"),
]

ArrivalProcess = Literal["poisson", "fixed", "normal"]


@dataclass(frozen=True, eq=False)
class QueryTrace:
    """Seeded sequence of query arrivals and sizes."""

    seed: int
    lam: float
    arrivals: np.ndarray
    sizes: np.ndarray
    distribution: FixedSize | NormalSize | LogNormalSize | ProductionHeavyTail | None = None

    def __len__(self) -> int:
        return len(self.sizes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QueryTrace):
            return NotImplemented
        return (
            self.seed == other.seed
            and self.lam == other.lam
            and self.distribution == other.distribution
            and np.array_equal(self.arrivals, other.arrivals)
            and np.array_equal(self.sizes, other.sizes)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def records(self) -> list[tuple[float, int]]:
        return list(zip(self.arrivals.tolist(), self.sizes.tolist(), strict=True))


class TraceStats(BaseModel):
    """Summary statistics of a query trace."""

    count: int
    mean_size: float
    p50_size: int
    p95_size: int
    p99_size: int
    max_size: int
    mean_gap: float
    gap_variance: float
    top_quartile_work_share: float = Field(description="Share of total items held by the largest 25% of queries")
    survival_above_500: float


class TraceParams(BaseModel):
    """How to generate the traces behind one throughput measurement."""

    model_config = ConfigDict(frozen=True)

    distribution: SizeDistribution = Field(default_factory=ProductionHeavyTail)
    trace_length: int = Field(default=50_000, ge=1)
    base_seed: int = Field(default=0, ge=0)
    replicates: int = Field(default=3, ge=1, description="Seeds averaged per evaluation")
    arrival: ArrivalProcess = "poisson"
    warmup_fraction: float = Field(default=0.1, ge=0, le=0.5, description="Leading share of each trace discarded")
    sla_horizon: float = Field(default=0.0, ge=0, description="Lengthen traces to span this many SLA windows")
    max_trace_length: int = Field(default=300_000, ge=1, description="Cap on horizon-lengthened traces")

    def length_at(self, lam: float, sla: float | None = None) -> int:
        """Queries per trace at arrival rate `lam`; at least trace_length."""
        if sla is None or self.sla_horizon == 0:
            return self.trace_length
        wanted = min(self.max_trace_length, math.ceil(self.sla_horizon * sla * lam))
        return max(self.trace_length, wanted)


# Simulation


class SchedulerConfig(BaseModel):
    """Knobs and platform for one simulation run."""

    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(ge=1, description="Items per CPU request")
    offload_threshold: int | None = Field(default=None, ge=1, description="Larger queries run on the accelerator")
    model: ModelSpec
    cpu: CpuPlatformSpec
    accel: AcceleratorSpec | None = None
    sla_p95: float = Field(gt=0, description="p95 latency target in seconds")
    warmup_fraction: float = Field(default=0.1, ge=0, le=0.5)


Device = Literal["cpu", "accel"]


@dataclass
class SimResult:
    """Outcome of one simulation run, restricted to post-warmup queries."""

    arrivals: np.ndarray
    sizes: np.ndarray
    latencies: np.ndarray
    on_accel: np.ndarray
    completed: int
    dropped: int
    core_utilization: float
    accel_utilization: float
    accel_work_fraction: float
    achieved_qps: float
    events: list["EventRecord"] = field(default_factory=list)

    def to_summary(self) -> dict[str, Any]:
        from .simulator import summarize

        summary = summarize(self)
        return {
            "completed": self.completed,
            "dropped": self.dropped,
            "achieved_qps": self.achieved_qps,
            "core_utilization": self.core_utilization,
            "accel_utilization": self.accel_utilization,
            "accel_work_fraction": self.accel_work_fraction,
            **summary.model_dump(),
        }

    def write_latency_csv(self, path: str | Path) -> None:
        frame = pd.DataFrame(
            {
                "arrival": self.arrivals,
                "size": self.sizes,
                "latency_s": self.latencies,
                "device": np.where(self.on_accel, "accel", "cpu"),
            }
        )
        frame.to_csv(path, index=False, lineterminator="\n")


@dataclass(frozen=True)
class EventRecord:
    """One processed event, for auditing scheduler behaviour."""

    time: float
    kind: Literal["arrival", "dispatch", "completion", "query_done"]
    query: int
    device: Device
    batch: int
    busy_cores: int
    queued_requests: int


class LatencySummary(BaseModel):
    """Exact order-statistic latency percentiles in seconds."""

    p50: float
    p95: float
    p99: float
    mean: float
    max: float


class SlaCapacity(BaseModel):
    """Largest sustainable arrival rate under a p95 target."""

    qps: float = Field(ge=0, description="Achieved completion rate at the accepted arrival rate")
    at_lambda: float = Field(ge=0, description="Accepted arrival rate")
    p95: float | None = None
    accel_work_fraction: float = 0.0


# Tuning


class SearchStep(BaseModel):
    """One evaluation made by the hill climber."""

    knob: Literal["batch", "threshold"]
    value: int | None
    qps: float


class TunedConfig(BaseModel):
    """Knobs chosen by the tuner and the throughput they achieve."""

    batch_size: int
    offload_threshold: int | None
    qps: float
    qps_per_watt: float
    p95: float | None = None
    accel_work_fraction: float = 0.0
    search_path: list[SearchStep] = Field(default_factory=list)


class SweepRow(BaseModel):
    """One grid point of a design-space sweep."""

    batch_size: int
    threshold: int | None
    sla: float
    qps: float
    p95: float | None
    qps_per_watt: float
    accel_work_fraction: float


SWEEP_COLUMNS = ["batch_size", "threshold", "sla", "qps", "p95", "qps_per_watt", "accel_work_fraction"]


class SweepTable(BaseModel):
    """All grid points of a sweep, in grid order."""

    model: str = ""
    rows: list[SweepRow] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_unique(self) -> "SweepTable":
        keys = [(r.batch_size, r.threshold, r.sla) for r in self.rows]
        if len(keys) != len(set(keys)):
            raise ValueError("sweep table contains duplicate grid points")
        return self

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([r.model_dump() for r in self.rows], columns=SWEEP_COLUMNS)
        frame["threshold"] = frame["threshold"].astype("Int64")
        return frame

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, lineterminator="\n")

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.model_dump(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path, model: str = "") -> "SweepTable":
        frame = pd.read_csv(path)
        missing = set(SWEEP_COLUMNS) - set(frame.columns)
        if missing:
            raise ValueError(f"{path} is missing sweep columns: {sorted(missing)}")
        rows = []
        for record in frame.to_dict(orient="records"):
            rows.append(
                SweepRow(
                    batch_size=int(record["batch_size"]),
                    threshold=None if pd.isna(record["threshold"]) else int(record["threshold"]),
                    sla=float(record["sla"]),
                    qps=float(record["qps"]),
                    p95=None if pd.isna(record["p95"]) else float(record["p95"]),
                    qps_per_watt=float(record["qps_per_watt"]),
                    accel_work_fraction=float(record["accel_work_fraction"]),
                )
            )
        return cls(model=model, rows=rows)


# Reporting

Scheduler = Literal["static", "tuned-cpu", "tuned-accel"]
SlaLevel = Literal["low", "medium", "high"]


class ReportRow(BaseModel):
    """One (model, SLA, scheduler) line of the evaluation report."""

    model: str
    sla: SlaLevel
    scheduler: Scheduler
    qps: float
    qps_norm: float = 0.0
    p95_s: float | None
    watts: float
    qps_per_watt: float
    batch: int
    threshold: int | None
    accel_work_fraction: float


REPORT_COLUMNS = [
    "model",
    "sla",
    "scheduler",
    "qps",
    "qps_norm",
    "p95_s",
    "watts",
    "qps_per_watt",
    "batch",
    "threshold",
    "accel_work_fraction",
]
