"""
Report runner - evaluates static and tuned schedulers across models and SLA levels.

For every (model, SLA level) the runner measures the static production
baseline, the CPU-only tuned configuration and, when an accelerator is
configured, the CPU+accelerator tuned configuration. It also sweeps the knob
grid per model for the Pareto scatter.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd

from .config import ExperimentConfig
from .errors import InfeasibleSLA, RecsimError
from .models import (
    REPORT_COLUMNS,
    AcceleratorSpec,
    CpuPlatformSpec,
    ModelSpec,
    ReportRow,
    Scheduler,
    SchedulerConfig,
    SlaLevel,
    SweepTable,
    TraceParams,
)
from .simulator import max_qps_under_sla
from .platform import power
from .tuner import pareto_mask, static_baseline_batch, sweep, tune
from .utils import map_in_order

PARETO_COLUMNS = ["model", "sla", "p95_s", "qps", "batch", "threshold", "is_pareto"]


@dataclass(frozen=True)
class ReportJob:
    """One scheduler evaluation in a report."""

    model: ModelSpec
    cpu: CpuPlatformSpec
    accel: AcceleratorSpec | None
    level: SlaLevel
    sla: float
    scheduler: Scheduler
    params: TraceParams


@dataclass
class ReportResult:
    rows: list[ReportRow]
    sweeps: list[SweepTable] = field(default_factory=list)


def run_job(job: ReportJob) -> ReportRow:
    """Evaluate one scheduler at one SLA level."""
    max_size = job.params.distribution.max_size
    threshold: int | None
    p95: float | None
    if job.scheduler == "static":
        batch = static_baseline_batch(job.cpu, max_size)
        cfg = SchedulerConfig(batch_size=batch, model=job.model, cpu=job.cpu, sla_p95=job.sla)
        capacity = max_qps_under_sla(cfg, job.sla, job.params)
        threshold = None
        qps, p95, fraction = capacity.qps, capacity.p95, capacity.accel_work_fraction
    else:
        accel = job.accel if job.scheduler == "tuned-accel" else None
        try:
            tuned = tune(job.model, job.cpu, accel, job.sla, job.params)
            batch, threshold = tuned.batch_size, tuned.offload_threshold
            qps, p95, fraction = tuned.qps, tuned.p95, tuned.accel_work_fraction
        except InfeasibleSLA:
            # Report an infeasible target as zero throughput rather than dropping the row.
            batch, threshold, qps, p95, fraction = 1, None, 0.0, None, 0.0

    # Only the tuned-accel scheduler provisions the accelerator.
    watts = power(job.cpu, job.accel if job.scheduler == "tuned-accel" else None)
    return ReportRow(
        model=job.model.name,
        sla=job.level,
        scheduler=job.scheduler,
        qps=qps,
        p95_s=p95,
        watts=watts,
        qps_per_watt=qps / watts,
        batch=batch,
        threshold=threshold,
        accel_work_fraction=fraction,
    )


def normalize(rows: list[ReportRow]) -> list[ReportRow]:
    """Set qps_norm against each model's static baseline at its lowest SLA level."""
    order = {"low": 0, "medium": 1, "high": 2}
    anchors: dict[str, ReportRow] = {}
    for row in rows:
        if row.scheduler != "static":
            continue
        current = anchors.get(row.model)
        if current is None or order[row.sla] < order[current.sla]:
            anchors[row.model] = row

    normalized: list[ReportRow] = []
    for row in rows:
        anchor = anchors.get(row.model)
        if anchor is None:
            raise RecsimError(f"report has no static baseline row for model {row.model}")
        norm = row.qps / anchor.qps if anchor.qps > 0 else 0.0
        normalized.append(row.model_copy(update={"qps_norm": norm}))
    return normalized


class ExperimentRunner:
    """Runs the report jobs described by an ExperimentConfig."""

    def __init__(self, experiment: ExperimentConfig, workers: int = 1):
        """
        Initialize the runner.

        Args:
            experiment: Models, platforms, SLA levels and grids to evaluate
            workers: Worker processes for independent jobs
        """
        self.experiment = experiment
        self.workers = workers
        self.cpu = experiment.resolve_cpu()
        self.accel = experiment.resolve_accelerator()
        self.params = experiment.trace_params()
        self.logger = logging.getLogger(__name__)

    def jobs(self) -> list[ReportJob]:
        schedulers: list[Scheduler] = ["static", "tuned-cpu"]
        if self.accel is not None:
            schedulers.append("tuned-accel")
        jobs: list[ReportJob] = []
        for model in self.experiment.models_for_report():
            for level in self.experiment.report_slas:
                sla = self.experiment.sla_seconds(model, level)
                for scheduler in schedulers:
                    jobs.append(ReportJob(model, self.cpu, self.accel, level, sla, scheduler, self.params))
        return jobs

    def sweeps(self) -> list[SweepTable]:
        tables: list[SweepTable] = []
        thresholds = self.experiment.threshold_grid if self.accel is not None else [None]
        for model in self.experiment.models_for_report():
            slas = [self.experiment.sla_seconds(model, level) for level in self.experiment.report_slas]
            self.logger.info(f"Sweeping design space for {model.name}")
            tables.append(
                sweep(
                    model,
                    self.cpu,
                    self.accel,
                    slas,
                    self.experiment.batch_grid,
                    thresholds,
                    self.params,
                    workers=self.workers,
                )
            )
        return tables

    def run(self, with_sweeps: bool = True) -> ReportResult:
        jobs = self.jobs()
        self.logger.info(f"Running {len(jobs)} report jobs with {self.workers} worker(s)")
        rows = normalize(map_in_order(run_job, jobs, self.workers))
        return ReportResult(rows=rows, sweeps=self.sweeps() if with_sweeps else [])


def pareto_frame(sweeps: list[SweepTable]) -> pd.DataFrame:
    """Per-model sweep points with their Pareto flag."""
    frames: list[pd.DataFrame] = []
    for table in sweeps:
        frame = table.to_frame()
        frames.append(
            pd.DataFrame(
                {
                    "model": table.model,
                    "sla": frame["sla"],
                    "p95_s": frame["p95"],
                    "qps": frame["qps"],
                    "batch": frame["batch_size"],
                    "threshold": frame["threshold"],
                    "is_pareto": pareto_mask(frame),
                }
            )
        )
    if not frames:
        return pd.DataFrame(columns=PARETO_COLUMNS)
    return pd.concat(frames, ignore_index=True)[PARETO_COLUMNS]


def emit_report(result: ReportResult, out_dir: str | Path) -> list[Path]:
    """Write report.csv and pareto.csv into out_dir; returns the written paths."""
    if not result.rows:
        raise RecsimError("nothing to report")
    out = Path(out_dir)
    report_path = out / "report.csv"
    pareto_path = out / "pareto.csv"

    frame = pd.DataFrame([row.model_dump() for row in result.rows], columns=REPORT_COLUMNS)
    frame["threshold"] = frame["threshold"].astype("Int64")
    try:
        out.mkdir(parents=True, exist_ok=True)
        frame.to_csv(report_path, index=False, lineterminator="\n")
        pareto_frame(result.sweeps).to_csv(pareto_path, index=False, lineterminator="\n")
    except OSError as e:
        raise RecsimError(f"Cannot write report to {out}: {e}") from e

    logging.getLogger(__name__).info(f"Wrote {report_path} and {pareto_path}")
    return [report_path, pareto_path]
