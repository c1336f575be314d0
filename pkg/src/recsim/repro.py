"""
Reproduction suite - runs the acceptance checks at desk scale.

Fast checks (queueing oracle, statistics, hill-climb oracle) run directly.
Trend checks share one report over the whole zoo on the default Skylake server
with the default accelerator, computed on first use.
"""

import logging
import math
import time
from collections.abc import Callable
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from .config import ExperimentConfig
from .loadgen import gen_trace, trace_stats
from .models import FixedSize, ProductionHeavyTail, ReportRow, SchedulerConfig, SimResult
from .platform import BROADWELL, DEFAULT_ACCELERATOR, SKYLAKE, cpu_service_time, power
from .report import ExperimentRunner, ReportResult, emit_report
from .simulator import lowest_feasible_p95, max_qps_under_sla, simulate, summarize
from .tuner import BATCH_LADDER, Tuner, threshold_ladder, tune
from .zoo import builtin_model, list_models, sla_target

logger = logging.getLogger(__name__)


class ReproProfile(BaseModel):
    """Scale of a reproduction run."""

    name: str
    trace_length: int = Field(ge=1, description="Queries per evaluation trace")
    replicates: int = Field(ge=1)
    sla_horizon: float = Field(default=30.0, ge=0, description="Minimum trace span in SLA windows")
    queueing_queries: int = Field(default=100_000, ge=1)
    stats_samples: int = Field(default=1_000_000, ge=1)
    percentile_sets: int = Field(default=10_000, ge=1)
    hill_climb_configs: int = Field(default=20, ge=1)


PROFILES = {
    "desk": ReproProfile(name="desk", trace_length=1_000, replicates=1, percentile_sets=1_000),
    "full": ReproProfile(name="full", trace_length=50_000, replicates=3),
}


@dataclass
class ReproCheckResult:
    """Outcome of one acceptance check."""

    name: str
    passed: bool
    detail: str
    seconds: float = 0.0


@dataclass
class SyntheticSurface:
    """Separable unimodal QPS surface: a batch curve times an offload gain curve."""

    batch_peak: float
    batch_width: float
    peak_qps: float
    threshold_peak: float
    threshold_width: float
    offload_gain: float

    def batch_qps(self, batch: int) -> float:
        return self.peak_qps * math.exp(-((math.log2(batch) - self.batch_peak) ** 2) / self.batch_width)

    def gain(self, threshold: int | None) -> float:
        if threshold is None:
            return 1.0
        z = (math.log(threshold) - self.threshold_peak) / self.threshold_width
        return 1.0 + self.offload_gain * math.exp(-0.5 * z * z)

    def __call__(self, batch: int, threshold: int | None) -> float:
        return self.batch_qps(batch) * self.gain(threshold)

    @classmethod
    def random(cls, rng: np.random.Generator, max_size: int = 1000) -> "SyntheticSurface":
        return cls(
            batch_peak=float(rng.uniform(0, 10)),
            batch_width=float(rng.uniform(2, 12)),
            peak_qps=float(rng.uniform(100, 10_000)),
            threshold_peak=float(rng.uniform(0, math.log(max_size))),
            threshold_width=float(rng.uniform(0.5, 1.5)),
            offload_gain=float(rng.uniform(0, 1)),
        )

    def optimum(self, max_size: int = 1000) -> float:
        """Exhaustive optimum over the batch ladder and every integer threshold."""
        best = max(self.batch_qps(b) for b in BATCH_LADDER)
        return best * max(self.gain(t) for t in range(1, max_size + 1))


class ReproRunner:
    """Runs acceptance checks and collects their results."""

    def __init__(self, profile: ReproProfile, out_dir: str | Path, workers: int = 1, seed: int = 0):
        """
        Initialize the runner.

        Args:
            profile: Trace lengths and sample sizes to use
            out_dir: Where report CSVs are written
            workers: Worker processes for report jobs
            seed: Base seed for every generated trace
        """
        self.profile = profile
        self.out_dir = Path(out_dir)
        self.workers = workers
        self.seed = seed
        self.logger = logging.getLogger(__name__)
        self.checks: dict[str, Callable[[], tuple[bool, str]]] = {
            "md1-oracle": self.check_md1_oracle,
            "percentile-exactness": self.check_percentiles,
            "arrival-moments": self.check_arrival_moments,
            "heavy-tail": self.check_heavy_tail,
            "hill-climb-oracle": self.check_hill_climb,
            "sla-trend": self.check_sla_trend,
            "model-trend": self.check_model_trend,
            "platform-trend": self.check_platform_trend,
            "baseline-dominance": self.check_baseline_dominance,
            "offload-trend": self.check_offload_trend,
            "power-efficiency": self.check_power_efficiency,
            "determinism": self.check_determinism,
            "distribution-sensitivity": self.check_distribution_sensitivity,
        }

    def experiment(self, **overrides: object) -> ExperimentConfig:
        fields: dict[str, object] = {
            "cpu": "skylake",
            "accelerator": "default",
            "trace_length": self.profile.trace_length,
            "replicates": self.profile.replicates,
            "sla_horizon": self.profile.sla_horizon,
            "base_seed": self.seed,
            "report_models": list_models(),
        }
        fields.update(overrides)
        return ExperimentConfig.model_validate(fields)

    @cached_property
    def report(self) -> ReportResult:
        result = ExperimentRunner(self.experiment(), workers=self.workers).run(with_sweeps=False)
        emit_report(result, self.out_dir)
        return result

    def row(self, model: str, sla: str, scheduler: str) -> ReportRow:
        for r in self.report.rows:
            if (r.model, r.sla, r.scheduler) == (model, sla, scheduler):
                return r
        raise KeyError((model, sla, scheduler))

    def run(self, only: list[str] | None = None) -> list[ReproCheckResult]:
        unknown = set(only or []) - set(self.checks)
        if unknown:
            raise ValueError(f"Unknown checks: {', '.join(sorted(unknown))}")
        results: list[ReproCheckResult] = []
        for name, check in self.checks.items():
            if only and name not in only:
                continue
            self.logger.info(f"Running check {name}")
            start = time.perf_counter()
            try:
                passed, detail = check()
            except Exception as e:
                self.logger.exception(f"Check {name} raised")
                passed, detail = False, f"raised {type(e).__name__}: {e}"
            results.append(ReproCheckResult(name, passed, detail, time.perf_counter() - start))
        return results

    def format_results(self, results: list[ReproCheckResult]) -> str:
        lines = [
            f"{'✅ PASS' if r.passed else '❌ FAIL'} {r.name} ({r.seconds:.1f}s): {r.detail}" for r in results
        ]
        passed = sum(r.passed for r in results)
        lines.append(f"{passed}/{len(results)} checks passed ({self.profile.name} profile)")
        return "\n".join(lines)

    # Exact and statistical oracles

    def check_md1_oracle(self) -> tuple[bool, str]:
        model = builtin_model("NCF")
        cpu = BROADWELL.model_copy(update={"cores": 1})
        service = cpu_service_time(model, 1, 1, cpu).total
        rho = 0.5
        trace = gen_trace(self.seed, rho / service, FixedSize(size=1), self.profile.queueing_queries)
        cfg = SchedulerConfig(batch_size=1, model=model, cpu=cpu, sla_p95=1.0)
        result = simulate(trace, cfg)
        wait = float(np.mean(result.latencies)) - service
        expected = rho * service / (2 * (1 - rho))
        error = abs(wait - expected) / expected
        return error <= 0.05, f"mean wait {wait:.3e}s vs {expected:.3e}s ({error:.1%} off)"

    def check_percentiles(self) -> tuple[bool, str]:
        rng = np.random.default_rng(self.seed)
        for _ in range(self.profile.percentile_sets):
            n = int(rng.integers(1, 500))
            latencies = rng.exponential(1.0, n)
            summary = summarize(_latency_result(latencies))
            ordered = sorted(latencies.tolist())
            for p, value in ((50, summary.p50), (95, summary.p95), (99, summary.p99)):
                if value != ordered[(p * n + 99) // 100 - 1]:
                    return False, f"p{p} mismatch for n={n}"
        return True, f"{self.profile.percentile_sets} random sets match the sorted order statistic"

    def check_arrival_moments(self) -> tuple[bool, str]:
        lam = 500.0
        stats = trace_stats(gen_trace(7, lam, ProductionHeavyTail(), self.profile.stats_samples))
        mean_err = abs(stats.mean_gap * lam - 1)
        var_err = abs(stats.gap_variance * lam**2 - 1)
        return mean_err <= 0.01 and var_err <= 0.03, f"mean off {mean_err:.2%}, variance off {var_err:.2%}"

    def check_heavy_tail(self) -> tuple[bool, str]:
        dist = ProductionHeavyTail()
        heavy = trace_stats(gen_trace(self.seed, 1.0, dist, self.profile.stats_samples))
        body = trace_stats(gen_trace(self.seed, 1.0, dist.body(), self.profile.stats_samples))
        share = heavy.top_quartile_work_share
        ok = 0.45 <= share <= 0.55 and share > body.top_quartile_work_share
        return ok, f"top-quartile share {share:.3f} vs lognormal body {body.top_quartile_work_share:.3f}"

    def check_hill_climb(self) -> tuple[bool, str]:
        rng = np.random.default_rng(self.seed)
        worst = 1.0
        for _ in range(self.profile.hill_climb_configs):
            surface = SyntheticSurface.random(rng)
            tuned = Tuner(surface, use_accelerator=True).run()
            worst = min(worst, tuned.qps / surface.optimum())
        return worst >= 0.98, f"worst tuned/optimum ratio {worst:.4f}"

    # Trends on the shared zoo report

    def check_sla_trend(self) -> tuple[bool, str]:
        low = self.row("DLRM-RMC3", "low", "tuned-cpu").batch
        medium = self.row("DLRM-RMC3", "medium", "tuned-cpu").batch
        broken = [
            m
            for m in list_models()
            if not (
                self.row(m, "low", "tuned-cpu").batch
                <= self.row(m, "medium", "tuned-cpu").batch
                <= self.row(m, "high", "tuned-cpu").batch
            )
        ]
        ok = low < medium and not broken
        return ok, f"DLRM-RMC3 batch {low} -> {medium}; non-monotone models: {broken or 'none'}"

    def check_model_trend(self) -> tuple[bool, str]:
        b = {m: self.row(m, "high", "tuned-cpu").batch for m in ("DLRM-RMC1", "DLRM-RMC3", "DIN", "WND")}
        ok = b["DLRM-RMC1"] > b["DLRM-RMC3"] and b["DIN"] > b["WND"]
        return ok, ", ".join(f"{m}={v}" for m, v in b.items())

    def check_platform_trend(self) -> tuple[bool, str]:
        model = builtin_model("DLRM-RMC3")
        sla = sla_target(model.name, "low")
        skylake = self.row(model.name, "low", "tuned-cpu").batch
        broadwell = tune(model, BROADWELL, None, sla, self.experiment().trace_params()).batch_size
        return broadwell >= skylake, f"broadwell batch {broadwell} vs skylake {skylake}"

    def check_baseline_dominance(self) -> tuple[bool, str]:
        failures: list[str] = []
        ratios: list[float] = []
        for m in list_models():
            for level in ("low", "medium", "high"):
                static = self.row(m, level, "static").qps
                cpu = self.row(m, level, "tuned-cpu").qps
                accel = self.row(m, level, "tuned-accel").qps
                if cpu < static or accel < cpu:
                    failures.append(f"{m}/{level}")
                if level == "medium" and static > 0:
                    ratios.append(cpu / static)
        geomean = float(np.exp(np.mean(np.log(ratios)))) if ratios else 0.0
        ok = not failures and geomean >= 1.5
        return ok, f"medium geomean gain {geomean:.2f}x; violations: {failures or 'none'}"

    def check_offload_trend(self) -> tuple[bool, str]:
        levels = ("low", "medium", "high")
        fractions = [self.row("DLRM-RMC1", level, "tuned-accel").accel_work_fraction for level in levels]
        monotone = fractions[0] >= fractions[1] >= fractions[2]

        model = builtin_model("DLRM-RMC1")
        params = self.experiment().trace_params()
        cpu_p95, _, _ = lowest_feasible_p95(model, SKYLAKE, None, params, BATCH_LADDER)
        accel_p95, _, _ = lowest_feasible_p95(
            model, SKYLAKE, DEFAULT_ACCELERATOR, params, BATCH_LADDER, [None, *threshold_ladder(1000)]
        )
        ok = monotone and accel_p95 < cpu_p95
        detail = (
            f"accel work {', '.join(f'{f:.2f}' for f in fractions)}; "
            f"lowest p95 {accel_p95 * 1e3:.3f} ms with accelerator vs {cpu_p95 * 1e3:.3f} ms CPU-only"
        )
        return ok, detail

    def check_power_efficiency(self) -> tuple[bool, str]:
        cpu_row = self.row("DLRM-RMC1", "high", "tuned-cpu")
        accel_row = self.row("DLRM-RMC1", "high", "tuned-accel")
        cpu_eff = cpu_row.qps / power(SKYLAKE)
        accel_eff = accel_row.qps / power(SKYLAKE, DEFAULT_ACCELERATOR)
        return cpu_eff > accel_eff, f"CPU-only {cpu_eff:.1f} QPS/W vs CPU+accelerator {accel_eff:.1f} QPS/W"

    def check_determinism(self) -> tuple[bool, str]:
        experiment = self.experiment(report_models=["NCF"], report_slas=["medium"], batch_grid=[1, 4, 16])
        outputs: list[list[bytes]] = []
        for run in ("a", "b"):
            result = ExperimentRunner(experiment, workers=self.workers).run()
            paths = emit_report(result, self.out_dir / "determinism" / run)
            outputs.append([p.read_bytes() for p in paths])
        return outputs[0] == outputs[1], "report.csv and pareto.csv byte-identical across runs"

    def check_distribution_sensitivity(self) -> tuple[bool, str]:
        model = builtin_model("DLRM-RMC1")
        native = self.experiment().trace_params()
        lognormal = native.model_copy(update={"distribution": ProductionHeavyTail().body()})
        details: list[str] = []
        ok = True
        for level in ("low", "medium", "high"):
            sla = sla_target(model.name, level)
            tuned_native = self.row(model.name, level, "tuned-cpu")
            foreign = tune(model, SKYLAKE, None, sla, lognormal)
            cfg = SchedulerConfig(batch_size=foreign.batch_size, model=model, cpu=SKYLAKE, sla_p95=sla)
            replay = max_qps_under_sla(cfg, sla, native).qps
            ok = ok and replay < tuned_native.qps
            details.append(
                f"{level}: replayed B={foreign.batch_size} {replay:.0f} QPS"
                f" vs native B={tuned_native.batch} {tuned_native.qps:.0f} QPS"
            )
        return ok, "; ".join(details)


def _latency_result(latencies: np.ndarray) -> SimResult:
    n = len(latencies)
    return SimResult(
        arrivals=np.zeros(n),
        sizes=np.ones(n, dtype=np.int64),
        latencies=latencies,
        on_accel=np.zeros(n, dtype=bool),
        completed=n,
        dropped=0,
        core_utilization=0.0,
        accel_utilization=0.0,
        accel_work_fraction=0.0,
        achieved_qps=0.0,
    )
