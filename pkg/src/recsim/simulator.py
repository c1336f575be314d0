"""
Discrete-event simulation of a recommendation inference server.

Queries arrive from a trace. A query above the offload threshold runs whole on
the accelerator FIFO; every other query is split into requests of at most
`batch_size` items that share one CPU FIFO served by all cores. Each CPU
request is priced at dispatch with the number of cores busy at that instant.
"""

import heapq
import logging
import math
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConfigError, EmptyResult
from .loadgen import gen_trace
from .models import (
    AcceleratorSpec,
    CpuPlatformSpec,
    EventRecord,
    LatencySummary,
    ModelSpec,
    QueryTrace,
    SchedulerConfig,
    SimResult,
    SlaCapacity,
    TraceParams,
)
from .platform import accel_service_time, cpu_service_time
from .utils import nearest_rank

logger = logging.getLogger(__name__)

LAMBDA_LO = 1.0
LAMBDA_PRECISION = 1.01


class EventType(IntEnum):
    # Completions sort before arrivals at equal timestamps.
    COMPLETION = 0
    ARRIVAL = 1


class Resource(IntEnum):
    CPU = 0
    ACCEL = 1


def split_requests(size: int, batch_size: int) -> list[int]:
    """Request batches for a query of `size` items: full batches then the remainder."""
    full, rest = divmod(size, batch_size)
    return [batch_size] * full + ([rest] if rest else [])


class Simulator:
    """Runs traces against one scheduler configuration."""

    def __init__(self, cfg: SchedulerConfig, record_events: bool = False):
        """
        Initialize the simulator.

        Args:
            cfg: Knobs, model and platforms to simulate
            record_events: Keep an EventRecord for every processed event
        """
        if cfg.offload_threshold is not None and cfg.accel is None:
            raise ConfigError("offload_threshold is set but no accelerator is configured")
        self.cfg = cfg
        self.record_events = record_events
        self.logger = logging.getLogger(__name__)
        self._cpu_cost: dict[tuple[int, int], float] = {}
        self._accel_cost: dict[int, float] = {}

    def offloads(self, size: int) -> bool:
        threshold = self.cfg.offload_threshold
        return threshold is not None and size > threshold

    def cpu_time(self, batch: int, active_cores: int) -> float:
        key = (batch, active_cores)
        cost = self._cpu_cost.get(key)
        if cost is None:
            cost = cpu_service_time(self.cfg.model, batch, active_cores, self.cfg.cpu).total
            self._cpu_cost[key] = cost
        return cost

    def accel_time(self, size: int) -> float:
        cost = self._accel_cost.get(size)
        if cost is None:
            assert self.cfg.accel is not None
            cost = accel_service_time(self.cfg.model, size, self.cfg.accel).total
            self._accel_cost[size] = cost
        return cost

    def capacity_ceiling(self, sizes: Iterable[int]) -> float:
        """No-queueing arrival rate bound from single-core CPU pricing and accelerator time."""
        sizes = list(sizes)
        if not sizes:
            raise ValueError("capacity_ceiling needs at least one query size")
        cpu_seconds = 0.0
        accel_seconds = 0.0
        for size in sizes:
            if self.offloads(size):
                accel_seconds += self.accel_time(size)
            else:
                cpu_seconds += sum(self.cpu_time(b, 1) for b in split_requests(size, self.cfg.batch_size))
        bounds = []
        if cpu_seconds > 0:
            bounds.append(self.cfg.cpu.cores * len(sizes) / cpu_seconds)
        if accel_seconds > 0:
            bounds.append(len(sizes) / accel_seconds)
        return min(bounds)

    def run(self, trace: QueryTrace) -> SimResult:
        """Simulate the whole trace and return post-warmup metrics."""
        n = len(trace)
        if n == 0:
            raise ValueError("cannot simulate an empty trace")

        cfg = self.cfg
        cores = cfg.cpu.cores
        batch_size = cfg.batch_size
        arrivals: list[float] = trace.arrivals.tolist()
        sizes: list[int] = trace.sizes.tolist()
        warm = math.floor(cfg.warmup_fraction * n)
        window_start = arrivals[warm]

        finish = [0.0] * n
        on_accel = [False] * n
        outstanding = [0] * n
        events: list[EventRecord] = []

        # CPU FIFO entries: [query, requests not yet dispatched]
        cpu_queue: deque[list[int]] = deque()
        queued_requests = 0
        busy_cores = 0
        core_busy_time = 0.0

        accel_queue: deque[int] = deque()
        accel_busy = False
        accel_busy_time = 0.0

        heap: list[tuple[float, int, int, int, int, int]] = []
        seq = 0
        next_arrival = 0
        now = 0.0

        def log(kind: str, query: int, device: Resource, batch: int) -> None:
            events.append(
                EventRecord(
                    time=now,
                    kind=kind,  # type: ignore[arg-type]
                    query=query,
                    device="accel" if device is Resource.ACCEL else "cpu",
                    batch=batch,
                    busy_cores=busy_cores,
                    queued_requests=queued_requests,
                )
            )

        while next_arrival < n or heap:
            if heap and (next_arrival >= n or heap[0][0] <= arrivals[next_arrival]):
                now, _, _, device_id, query, batch = heapq.heappop(heap)
                device = Resource(device_id)
                if device is Resource.CPU:
                    busy_cores -= 1
                    outstanding[query] -= 1
                    if self.record_events:
                        log("completion", query, device, batch)
                    if outstanding[query] == 0:
                        finish[query] = now
                        if self.record_events:
                            log("query_done", query, device, sizes[query])
                else:
                    accel_busy = False
                    finish[query] = now
                    if self.record_events:
                        log("completion", query, device, sizes[query])
                        log("query_done", query, device, sizes[query])
            else:
                query = next_arrival
                next_arrival += 1
                now = arrivals[query]
                size = sizes[query]
                if self.offloads(size):
                    on_accel[query] = True
                    accel_queue.append(query)
                    device = Resource.ACCEL
                else:
                    requests = -(-size // batch_size)
                    outstanding[query] = requests
                    cpu_queue.append([query, requests])
                    queued_requests += requests
                    device = Resource.CPU
                if self.record_events:
                    log("arrival", query, device, size)

            while busy_cores < cores and cpu_queue:
                head = cpu_queue[0]
                query, remaining = head
                size = sizes[query]
                # Only the last request of a query carries the remainder.
                batch = batch_size if remaining > 1 or size % batch_size == 0 else size % batch_size
                if remaining == 1:
                    cpu_queue.popleft()
                else:
                    head[1] = remaining - 1
                queued_requests -= 1
                busy_cores += 1
                service = self.cpu_time(batch, busy_cores)
                end = now + service
                core_busy_time += max(0.0, end - max(now, window_start))
                heapq.heappush(heap, (end, EventType.COMPLETION, seq, Resource.CPU, query, batch))
                seq += 1
                if self.record_events:
                    log("dispatch", query, Resource.CPU, batch)

            if not accel_busy and accel_queue:
                query = accel_queue.popleft()
                accel_busy = True
                service = self.accel_time(sizes[query])
                end = now + service
                accel_busy_time += max(0.0, end - max(now, window_start))
                heapq.heappush(heap, (end, EventType.COMPLETION, seq, Resource.ACCEL, query, sizes[query]))
                seq += 1
                if self.record_events:
                    log("dispatch", query, Resource.ACCEL, sizes[query])

        arrivals_arr = trace.arrivals[warm:]
        sizes_arr = trace.sizes[warm:]
        finish_arr = np.array(finish[warm:])
        accel_mask = np.array(on_accel[warm:], dtype=bool)
        latencies = finish_arr - arrivals_arr

        window = float(finish_arr.max()) - window_start
        total_items = int(sizes_arr.sum())
        completed = n - warm
        result = SimResult(
            arrivals=arrivals_arr,
            sizes=sizes_arr,
            latencies=latencies,
            on_accel=accel_mask,
            completed=completed,
            dropped=0,
            core_utilization=core_busy_time / (cores * window) if window > 0 else 0.0,
            accel_utilization=accel_busy_time / window if window > 0 else 0.0,
            accel_work_fraction=int(sizes_arr[accel_mask].sum()) / total_items if total_items else 0.0,
            achieved_qps=completed / window if window > 0 else 0.0,
            events=events,
        )
        self.logger.debug(
            f"Simulated {n} queries (B={batch_size}, T={cfg.offload_threshold}): "
            f"{result.achieved_qps:.1f} QPS, core util {result.core_utilization:.2f}"
        )
        return result


def simulate(trace: QueryTrace, cfg: SchedulerConfig, record_events: bool = False) -> SimResult:
    """Run one trace through the scheduler described by cfg."""
    return Simulator(cfg, record_events=record_events).run(trace)


def summarize(result: SimResult) -> LatencySummary:
    """Exact order-statistic latency percentiles of the post-warmup queries."""
    if len(result.latencies) == 0:
        raise EmptyResult("no post-warmup queries to summarize")
    ordered = np.sort(result.latencies)
    return LatencySummary(
        p50=nearest_rank(ordered, 50),
        p95=nearest_rank(ordered, 95),
        p99=nearest_rank(ordered, 99),
        mean=float(np.mean(ordered)),
        max=float(ordered[-1]),
    )


def capacity_ceiling(cfg: SchedulerConfig, sizes: Iterable[int]) -> float:
    return Simulator(cfg).capacity_ceiling(sizes)


@dataclass
class _Evaluation:
    """Replicate-averaged measurement at one arrival rate."""

    p95: float
    qps: float
    accel_work_fraction: float


def _evaluate(sim: Simulator, lam: float, params: TraceParams, sla: float | None = None) -> _Evaluation:
    p95s: list[float] = []
    qps: list[float] = []
    fractions: list[float] = []
    n = params.length_at(lam, sla)
    for i in range(params.replicates):
        trace = gen_trace(params.base_seed + i, lam, params.distribution, n, params.arrival)
        result = sim.run(trace)
        p95s.append(summarize(result).p95)
        qps.append(result.achieved_qps)
        fractions.append(result.accel_work_fraction)
    return _Evaluation(float(np.mean(p95s)), float(np.mean(qps)), float(np.mean(fractions)))


def max_qps_under_sla(cfg: SchedulerConfig, sla: float, params: TraceParams) -> SlaCapacity:
    """
    Largest arrival rate whose replicate-mean p95 meets `sla`.

    Geometric bisection between LAMBDA_LO and the no-queueing capacity ceiling
    until the bracket is within 1%. Every candidate rate replays the same
    replicate seeds. Warm-up share and trace length come from `params`; with an
    SLA horizon, faster rates get longer traces so each covers the same span of
    SLA windows.
    """
    if sla <= 0:
        raise ValueError(f"sla must be > 0, got {sla}")

    sim = Simulator(cfg.model_copy(update={"warmup_fraction": params.warmup_fraction}))
    sizes = gen_trace(params.base_seed, LAMBDA_LO, params.distribution, params.trace_length, params.arrival).sizes
    hi = sim.capacity_ceiling(sizes.tolist())

    def accepted(lam: float) -> _Evaluation | None:
        evaluation = _evaluate(sim, lam, params, sla)
        ok = evaluation.p95 <= sla
        logger.debug(f"lambda={lam:.2f}: p95={evaluation.p95 * 1e3:.3f} ms {'ok' if ok else 'violates'} SLA")
        return evaluation if ok else None

    lo = LAMBDA_LO
    best = accepted(lo)
    if best is None:
        logger.debug(f"SLA {sla * 1e3:.3f} ms infeasible at lambda={lo}")
        return SlaCapacity(qps=0.0, at_lambda=0.0)

    if hi > lo:
        top = accepted(hi)
        if top is not None:
            lo, best = hi, top
        else:
            while hi / lo > LAMBDA_PRECISION:
                mid = math.sqrt(lo * hi)
                evaluation = accepted(mid)
                if evaluation is not None:
                    lo, best = mid, evaluation
                else:
                    hi = mid

    return SlaCapacity(qps=best.qps, at_lambda=lo, p95=best.p95, accel_work_fraction=best.accel_work_fraction)


def lowest_feasible_p95(
    model: ModelSpec,
    cpu: CpuPlatformSpec,
    accel: AcceleratorSpec | None,
    params: TraceParams,
    batches: Sequence[int],
    thresholds: Sequence[int | None] = (None,),
) -> tuple[float, int, int | None]:
    """Smallest light-load p95 over the knob grid, with the knobs that reach it."""
    best: tuple[float, int, int | None] | None = None
    for batch in batches:
        for threshold in thresholds:
            if threshold is not None and accel is None:
                continue
            # sla_p95 is unused by the simulation itself.
            cfg = SchedulerConfig(
                batch_size=batch,
                offload_threshold=threshold,
                model=model,
                cpu=cpu,
                accel=accel,
                sla_p95=1.0,
                warmup_fraction=params.warmup_fraction,
            )
            p95 = _evaluate(Simulator(cfg), LAMBDA_LO, params).p95
            if best is None or p95 < best[0]:
                best = (p95, batch, threshold)
    if best is None:
        raise ValueError("lowest_feasible_p95 needs a non-empty knob grid")
    return best
