"""
Knob tuning: two-phase hill climbing, exhaustive sweeps and Pareto extraction.

Phase 1 climbs the per-request batch size on the CPU alone. Phase 2 fixes that
batch size and climbs the accelerator offload threshold, then refines it on a
linear grid around the coarse optimum.
"""

import logging
import math
from collections.abc import Callable, Sequence
from functools import partial
from typing import Literal

import pandas as pd

from .errors import InfeasibleSLA
from .models import (
    AcceleratorSpec,
    CpuPlatformSpec,
    ModelSpec,
    SchedulerConfig,
    SearchStep,
    SlaCapacity,
    SweepRow,
    SweepTable,
    TraceParams,
    TunedConfig,
)
from .platform import power
from .simulator import max_qps_under_sla
from .utils import map_in_order

logger = logging.getLogger(__name__)

BATCH_LADDER = tuple(2**k for k in range(11))
DEGRADATION_TOLERANCE = 0.01

Evaluator = Callable[[int, int | None], float]


def threshold_ladder(max_size: int) -> list[int]:
    """Powers of two below max_size, then max_size itself."""
    ladder: list[int] = []
    t = 1
    while t < max_size:
        ladder.append(t)
        t *= 2
    ladder.append(max_size)
    return ladder


def static_baseline_batch(cpu: CpuPlatformSpec, max_size: int = 1000) -> int:
    """Batch size that spreads the largest query evenly over all cores."""
    return math.ceil(max_size / cpu.cores)


class SlaEvaluator:
    """Memoised max_qps_under_sla for one model, platform pair and SLA."""

    def __init__(
        self,
        model: ModelSpec,
        cpu: CpuPlatformSpec,
        accel: AcceleratorSpec | None,
        sla: float,
        params: TraceParams,
    ):
        self.model = model
        self.cpu = cpu
        self.accel = accel
        self.sla = sla
        self.params = params
        self.logger = logging.getLogger(__name__)
        self._cache: dict[tuple[int, int | None], SlaCapacity] = {}

    def capacity(self, batch: int, threshold: int | None) -> SlaCapacity:
        key = (batch, threshold)
        if key not in self._cache:
            cfg = SchedulerConfig(
                batch_size=batch,
                offload_threshold=threshold,
                model=self.model,
                cpu=self.cpu,
                accel=self.accel,
                sla_p95=self.sla,
            )
            self._cache[key] = max_qps_under_sla(cfg, self.sla, self.params)
            self.logger.debug(f"{self.model.name} B={batch} T={threshold}: {self._cache[key].qps:.1f} QPS")
        return self._cache[key]

    def __call__(self, batch: int, threshold: int | None) -> float:
        return self.capacity(batch, threshold).qps


class Tuner:
    """Hill climber over batch size and offload threshold."""

    def __init__(
        self,
        evaluator: Evaluator,
        use_accelerator: bool = False,
        max_size: int = 1000,
        tolerance: float = DEGRADATION_TOLERANCE,
        batches: Sequence[int] = BATCH_LADDER,
        significance: float = 0.0,
        incumbent: int | None = None,
    ):
        """
        Initialize the tuner.

        Args:
            evaluator: Maps (batch, threshold) to sustainable QPS
            use_accelerator: Run the offload-threshold phase
            max_size: Largest query size; the top of the threshold ladder
            tolerance: Relative QPS drop that ends a climb
            batches: Ascending batch-size ladder
            significance: Relative gain a larger batch needs over a smaller one to be chosen
            incumbent: Batch size evaluated before the ladder and kept unless the ladder beats it
        """
        self.evaluator = evaluator
        self.use_accelerator = use_accelerator
        self.max_size = max_size
        self.tolerance = tolerance
        self.batches = list(batches)
        self.significance = significance
        self.incumbent = incumbent
        self.search_path: list[SearchStep] = []
        self.logger = logging.getLogger(__name__)
        self._seen: dict[tuple[int, int | None], float] = {}

    def _evaluate(self, knob: Literal["batch", "threshold"], batch: int, threshold: int | None) -> float:
        key = (batch, threshold)
        if key not in self._seen:
            self._seen[key] = self.evaluator(batch, threshold)
            value = batch if knob == "batch" else threshold
            self.search_path.append(SearchStep(knob=knob, value=value, qps=self._seen[key]))
        return self._seen[key]

    def _better(self, qps: float, best: float, prefer_later: bool) -> bool:
        return qps > best or (prefer_later and qps == best)

    def _climb(
        self, values: Sequence[int], score: Callable[[int], float], prefer_later: bool, band: float = 0.0
    ) -> tuple[int, float]:
        """Climb until QPS drops more than the tolerance below the peak; pick among values within `band` of it."""
        seen: dict[int, float] = {}
        peak = -math.inf
        for value in values:
            qps = score(value)
            if qps < peak * (1 - self.tolerance):
                break
            seen[value] = qps
            peak = max(peak, qps)
        close = [value for value, qps in seen.items() if qps >= peak - abs(peak) * band]
        chosen = max(close) if prefer_later else min(close)
        return chosen, seen[chosen]

    def tune_batch(self) -> tuple[int, float]:
        """Phase 1: CPU-only climb over the batch ladder; near-ties keep the smaller batch."""

        def score(b: int) -> float:
            return self._evaluate("batch", b, None)

        incumbent = self.incumbent
        incumbent_qps = score(incumbent) if incumbent is not None else 0.0
        batch, qps = self._climb(self.batches, score, prefer_later=False, band=self.significance)
        if incumbent is not None and incumbent_qps > qps:
            self.logger.info(f"Phase 1: incumbent batch {incumbent} beats ladder batch {batch}")
            batch, qps = incumbent, incumbent_qps
        self.logger.info(f"Phase 1: batch {batch} sustains {qps:.1f} QPS")
        return batch, qps

    def tune_threshold(self, batch: int) -> tuple[int, float]:
        """Phase 2: coarse climb over the threshold ladder, then a linear refinement; ties keep the larger threshold."""

        def score(t: int) -> float:
            return self._evaluate("threshold", batch, t)

        coarse, qps = self._climb(threshold_ladder(self.max_size), score, prefer_later=True)
        step = max(1, coarse // 8)
        best, best_qps = coarse, qps
        t = coarse // 2 + step
        while t < 2 * coarse and t <= self.max_size:
            candidate = score(t)
            if self._better(candidate, best_qps, prefer_later=t > best):
                best, best_qps = t, candidate
            t += step
        self.logger.info(f"Phase 2: threshold {best} (coarse {coarse}) sustains {best_qps:.1f} QPS")
        return best, best_qps

    def run(self, watts: float = 1.0) -> TunedConfig:
        batch, qps = self.tune_batch()
        if qps <= 0:
            raise InfeasibleSLA("no batch size meets the latency target")

        threshold = None
        if self.use_accelerator:
            candidate, offload_qps = self.tune_threshold(batch)
            # The CPU-only result stays unless offloading clearly beats it.
            if offload_qps > qps * (1 + self.tolerance):
                threshold, qps = candidate, offload_qps
            else:
                self.logger.info("Offloading does not beat the CPU-only configuration")

        return TunedConfig(
            batch_size=batch,
            offload_threshold=threshold,
            qps=qps,
            qps_per_watt=qps / watts,
            search_path=list(self.search_path),
        )


def tune(
    model: ModelSpec,
    cpu: CpuPlatformSpec,
    accel: AcceleratorSpec | None,
    sla: float,
    params: TraceParams,
) -> TunedConfig:
    """Tune batch size (and offload threshold when an accelerator is present) for max QPS under sla."""
    if sla <= 0:
        raise ValueError(f"sla must be > 0, got {sla}")
    evaluator = SlaEvaluator(model, cpu, accel, sla, params)
    max_size = params.distribution.max_size
    # A larger batch must win by more than the search precision; the static baseline is the batch to beat.
    tuner = Tuner(
        evaluator,
        use_accelerator=accel is not None,
        max_size=max_size,
        significance=DEGRADATION_TOLERANCE,
        incumbent=static_baseline_batch(cpu, max_size),
    )
    logger.info(f"Tuning {model.name} on {cpu.name}{' + ' + accel.name if accel else ''} at p95 <= {sla * 1e3:g} ms")
    tuned = tuner.run()

    capacity = evaluator.capacity(tuned.batch_size, tuned.offload_threshold)
    # A provisioned accelerator draws its power whether or not the tuned threshold uses it.
    watts = power(cpu, accel)
    return tuned.model_copy(
        update={
            "qps_per_watt": tuned.qps / watts,
            "p95": capacity.p95,
            "accel_work_fraction": capacity.accel_work_fraction,
        }
    )


def _sweep_point(
    model: ModelSpec,
    cpu: CpuPlatformSpec,
    accel: AcceleratorSpec | None,
    params: TraceParams,
    point: tuple[float, int, int | None],
) -> SweepRow:
    sla, batch, threshold = point
    cfg = SchedulerConfig(
        batch_size=batch, offload_threshold=threshold, model=model, cpu=cpu, accel=accel, sla_p95=sla
    )
    capacity = max_qps_under_sla(cfg, sla, params)
    return SweepRow(
        batch_size=batch,
        threshold=threshold,
        sla=sla,
        qps=capacity.qps,
        p95=capacity.p95,
        qps_per_watt=capacity.qps / power(cpu, accel),
        accel_work_fraction=capacity.accel_work_fraction,
    )


def sweep(
    model: ModelSpec,
    cpu: CpuPlatformSpec,
    accel: AcceleratorSpec | None,
    slas: Sequence[float],
    batches: Sequence[int],
    thresholds: Sequence[int | None],
    params: TraceParams,
    workers: int = 1,
) -> SweepTable:
    """Evaluate every (sla, batch, threshold) grid point."""
    if not (slas and batches and thresholds):
        raise ValueError("sweep grids must be non-empty")
    if accel is None and any(t is not None for t in thresholds):
        raise ValueError("threshold grid needs an accelerator; use only 'none'")
    points = [(sla, b, t) for sla in slas for b in batches for t in thresholds]
    logger.info(f"Sweeping {len(points)} grid points for {model.name} with {workers} worker(s)")
    rows = map_in_order(partial(_sweep_point, model, cpu, accel, params), points, workers)
    return SweepTable(model=model.name, rows=rows)


def pareto_mask(frame: pd.DataFrame) -> pd.Series:
    """True for rows no other row beats on both qps (higher) and p95 (lower)."""
    mask = pd.Series(False, index=frame.index)
    ordered = frame[frame["p95"].notna()].sort_values(["p95", "qps"], ascending=[True, False], kind="stable")
    best_qps = -math.inf
    for _, group in ordered.groupby("p95", sort=True):
        top = group["qps"].max()
        if top > best_qps:
            mask[group.index[group["qps"] == top]] = True
            best_qps = top
    return mask


def pareto(table: SweepTable) -> list[SweepRow]:
    """Non-dominated rows ordered by p95, ties in table order."""
    if not table.rows:
        raise ValueError("pareto needs a non-empty sweep table")
    frame = table.to_frame()
    frontier = frame[pareto_mask(frame)].sort_values("p95", kind="stable")
    return [table.rows[i] for i in frontier.index]
