#!/usr/bin/env python
"""Tests for the discrete-event simulator and SLA capacity search."""

import math
from collections import Counter
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest

from recsim.errors import ConfigError, EmptyResult
from recsim.loadgen import gen_trace
from recsim.models import FixedSize, ProductionHeavyTail, QueryTrace, SchedulerConfig, SimResult, TraceParams
from recsim.platform import BROADWELL, DEFAULT_ACCELERATOR, SKYLAKE, accel_service_time, cpu_service_time
from recsim.simulator import (
    Simulator,
    capacity_ceiling,
    lowest_feasible_p95,
    max_qps_under_sla,
    simulate,
    split_requests,
    summarize,
)
from recsim.zoo import builtin_model

NCF = builtin_model("NCF")
RMC1 = builtin_model("DLRM-RMC1")


def single_core(**update: float) -> SchedulerConfig:
    """Helper: NCF on a one-core Broadwell with batch 1."""
    cpu = BROADWELL.model_copy(update={"cores": 1, **update})
    return SchedulerConfig(batch_size=1, model=NCF, cpu=cpu, sla_p95=1.0)


def one_query(size: int) -> QueryTrace:
    return QueryTrace(seed=0, lam=1.0, arrivals=np.array([1.0]), sizes=np.array([size], dtype=np.int64))


def latency_result(latencies: np.ndarray) -> SimResult:
    """Helper: a SimResult holding only latencies."""
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


class TestSplitting:
    """Test request splitting and empty-system latency."""

    def test_split_requests(self) -> None:
        """Test full batches then the remainder."""
        assert split_requests(10, 4) == [4, 4, 2]
        assert split_requests(8, 4) == [4, 4]
        assert split_requests(3, 4) == [3]

    def test_single_query_latency(self) -> None:
        """Test a lone query takes exactly its single-core service time."""
        cfg = single_core().model_copy(update={"batch_size": 4})
        result = simulate(one_query(4), cfg)
        assert result.latencies[0] == pytest.approx(cpu_service_time(NCF, 4, 1, cfg.cpu).total, rel=1e-9)

    def test_split_query_latency(self) -> None:
        """Test a split query finishes with its slowest request, priced by busy cores."""
        cpu = SKYLAKE.model_copy(update={"cores": 4})
        cfg = SchedulerConfig(batch_size=4, model=RMC1, cpu=cpu, sla_p95=1.0)
        result = simulate(one_query(10), cfg, record_events=True)

        dispatched = [(e.batch, e.busy_cores) for e in result.events if e.kind == "dispatch"]
        assert dispatched == [(4, 1), (4, 2), (2, 3)]
        expected = max(cpu_service_time(RMC1, b, a, cpu).total for b, a in dispatched)
        assert result.latencies[0] == pytest.approx(expected, rel=1e-9)

    def test_accelerator_query(self) -> None:
        """Test an offloaded query runs whole on the accelerator."""
        cfg = SchedulerConfig(
            batch_size=4, offload_threshold=5, model=RMC1, cpu=SKYLAKE, accel=DEFAULT_ACCELERATOR, sla_p95=1.0
        )
        result = simulate(one_query(10), cfg, record_events=True)
        assert result.on_accel.tolist() == [True]
        assert result.latencies[0] == pytest.approx(accel_service_time(RMC1, 10, DEFAULT_ACCELERATOR).total, rel=1e-9)
        assert [e.kind for e in result.events] == ["arrival", "dispatch", "completion", "query_done"]

    def test_threshold_without_accelerator(self) -> None:
        """Test an offload threshold needs an accelerator."""
        cfg = SchedulerConfig(batch_size=4, offload_threshold=5, model=RMC1, cpu=SKYLAKE, sla_p95=1.0)
        with pytest.raises(ConfigError):
            Simulator(cfg)

    def test_empty_trace(self) -> None:
        """Test an empty trace is rejected."""
        empty = QueryTrace(seed=0, lam=1.0, arrivals=np.array([]), sizes=np.array([], dtype=np.int64))
        with pytest.raises(ValueError):
            simulate(empty, single_core())


class TestQueueing:
    """Test queueing behaviour against analytic results."""

    def test_md1_mean_wait(self) -> None:
        """Test mean wait matches the M/D/1 formula within 5%."""
        cfg = single_core()
        service = cpu_service_time(NCF, 1, 1, cfg.cpu).total
        rho = 0.5
        result = simulate(gen_trace(0, rho / service, FixedSize(size=1), 100_000), cfg)
        wait = float(np.mean(result.latencies)) - service
        assert wait == pytest.approx(rho * service / (2 * (1 - rho)), rel=0.05)

    def test_p95_grows_with_load(self) -> None:
        """Test p95 rises with utilization on the same seed."""
        cfg = single_core()
        service = cpu_service_time(NCF, 1, 1, cfg.cpu).total
        p95s = [
            summarize(simulate(gen_trace(1, rho / service, FixedSize(size=1), 20_000), cfg)).p95
            for rho in (0.5, 0.7, 0.9)
        ]
        assert p95s[0] < p95s[1] < p95s[2]

    def test_work_conservation(self) -> None:
        """Test no request waits while a core is idle."""
        cpu = BROADWELL.model_copy(update={"cores": 4})
        cfg = SchedulerConfig(batch_size=8, model=RMC1, cpu=cpu, sla_p95=1.0)
        trace = gen_trace(3, 1.0, ProductionHeavyTail(), 2000)
        lam = 0.8 * capacity_ceiling(cfg, trace.sizes.tolist())
        result = simulate(gen_trace(3, lam, ProductionHeavyTail(), 2000), cfg, record_events=True)

        # The last record at each instant reflects the state after dispatching.
        settled = {e.time: e for e in result.events}
        assert any(e.queued_requests > 0 for e in settled.values())
        for e in settled.values():
            if e.queued_requests > 0:
                assert e.busy_cores == cpu.cores

    def test_every_item_is_served(self) -> None:
        """Test each query's dispatched batches add up to its size."""
        cfg = SchedulerConfig(batch_size=16, model=RMC1, cpu=SKYLAKE, sla_p95=1.0, warmup_fraction=0.0)
        trace = gen_trace(4, 5000.0, ProductionHeavyTail(), 1000)
        result = simulate(trace, cfg, record_events=True)

        served: Counter[int] = Counter()
        for e in result.events:
            if e.kind == "dispatch":
                served[e.query] += e.batch
        assert [served[q] for q in range(len(trace))] == trace.sizes.tolist()
        assert sum(e.kind == "query_done" for e in result.events) == len(trace)

    def test_latency_lower_bound(self) -> None:
        """Test no query finishes faster than its largest request on an idle core."""
        cfg = SchedulerConfig(batch_size=8, model=RMC1, cpu=SKYLAKE, sla_p95=1.0)
        trace = gen_trace(5, 20_000.0, ProductionHeavyTail(), 3000)
        result = simulate(trace, cfg)
        for size, latency in zip(result.sizes.tolist(), result.latencies.tolist(), strict=True):
            assert latency >= cpu_service_time(RMC1, min(size, 8), 1, SKYLAKE).total * (1 - 1e-9)


class TestSimResult:
    """Test simulation outputs."""

    def test_conservation(self) -> None:
        """Test every post-warmup query completes exactly once."""
        cfg = SchedulerConfig(batch_size=32, model=RMC1, cpu=SKYLAKE, sla_p95=1.0)
        result = simulate(gen_trace(0, 1000.0, ProductionHeavyTail(), 5000), cfg)
        assert result.completed == 4500
        assert len(result.latencies) == 4500
        assert result.dropped == 0
        assert np.all(result.latencies > 0)
        assert 0 < result.core_utilization <= 1

    def test_deterministic(self) -> None:
        """Test the same trace and config give identical latencies."""
        cfg = SchedulerConfig(batch_size=16, model=RMC1, cpu=SKYLAKE, sla_p95=1.0)
        trace = gen_trace(11, 2000.0, ProductionHeavyTail(), 3000)
        assert np.array_equal(simulate(trace, cfg).latencies, simulate(trace, cfg).latencies)

    @pytest.mark.parametrize("threshold,fraction", [(1000, 0.0), (25, 0.0), (24, 1.0), (1, 1.0)])
    def test_threshold_semantics(self, threshold: int, fraction: float) -> None:
        """Test only queries strictly larger than the threshold are offloaded."""
        cfg = SchedulerConfig(
            batch_size=8, offload_threshold=threshold, model=RMC1, cpu=SKYLAKE, accel=DEFAULT_ACCELERATOR, sla_p95=1.0
        )
        result = simulate(gen_trace(0, 100.0, FixedSize(size=25), 500), cfg)
        assert result.accel_work_fraction == fraction
        assert result.on_accel.all() == (fraction == 1.0)

    def test_summarize(self) -> None:
        """Test percentiles are exact order statistics."""
        latencies = np.random.default_rng(0).permutation(np.arange(1, 101, dtype=float))
        summary = summarize(latency_result(latencies))
        assert (summary.p50, summary.p95, summary.p99, summary.max) == (50.0, 95.0, 99.0, 100.0)
        assert summary.mean == pytest.approx(50.5)

    def test_summarize_single(self) -> None:
        """Test one latency is every percentile."""
        summary = summarize(latency_result(np.array([0.25])))
        assert summary.p50 == summary.p95 == summary.p99 == summary.max == 0.25

    def test_summarize_empty(self) -> None:
        """Test an empty result cannot be summarized."""
        with pytest.raises(EmptyResult):
            summarize(latency_result(np.array([])))

    def test_to_summary(self, tmp_path: Path) -> None:
        """Test the JSON summary and latency CSV."""
        cfg = SchedulerConfig(batch_size=16, model=RMC1, cpu=SKYLAKE, sla_p95=1.0)
        result = simulate(gen_trace(0, 500.0, ProductionHeavyTail(), 200), cfg)
        summary = result.to_summary()
        assert summary["completed"] == 180
        assert summary["p95"] <= summary["p99"] <= summary["max"]

        path = tmp_path / "latency.csv"
        result.write_latency_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "arrival,size,latency_s,device"
        assert len(lines) == 181


class TestCapacity:
    """Test the capacity ceiling and SLA search."""

    def test_capacity_ceiling(self) -> None:
        """Test the ceiling is cores over mean single-core CPU seconds per query."""
        cfg = SchedulerConfig(batch_size=4, model=RMC1, cpu=SKYLAKE, sla_p95=1.0)
        per_query = 2 * cpu_service_time(RMC1, 4, 1, SKYLAKE).total + cpu_service_time(RMC1, 2, 1, SKYLAKE).total
        assert capacity_ceiling(cfg, [10, 10, 10]) == pytest.approx(SKYLAKE.cores / per_query)

    def test_infeasible_sla(self) -> None:
        """Test an unreachable target yields zero throughput."""
        cfg = single_core()
        params = TraceParams(distribution=FixedSize(size=1), trace_length=200, replicates=1)
        capacity = max_qps_under_sla(cfg, 1e-9, params)
        assert capacity.qps == 0.0
        assert capacity.at_lambda == 0.0
        assert capacity.p95 is None

    def test_feasible_sla(self) -> None:
        """Test the accepted rate meets the target and stays below the ceiling."""
        cfg = SchedulerConfig(batch_size=16, model=RMC1, cpu=SKYLAKE, sla_p95=0.1)
        params = TraceParams(trace_length=500, replicates=2)
        capacity = max_qps_under_sla(cfg, 0.1, params)
        sizes = gen_trace(0, 1.0, params.distribution, 500).sizes.tolist()
        assert capacity.qps > 0
        assert capacity.p95 is not None and capacity.p95 <= 0.1
        assert capacity.at_lambda <= capacity_ceiling(cfg, sizes) * (1 + 1e-9)

    def test_doubling_cores(self) -> None:
        """Test two compute-bound cores sustain about twice the throughput of one."""
        one = single_core(mem_bandwidth_total=1e15, contention_coeff=0.0)
        two = one.model_copy(update={"cpu": one.cpu.model_copy(update={"cores": 2})})
        service = cpu_service_time(NCF, 1, 1, one.cpu).total
        params = TraceParams(distribution=FixedSize(size=1), trace_length=2000, replicates=1, arrival="fixed")
        qps_one = max_qps_under_sla(one, 10 * service, params).qps
        qps_two = max_qps_under_sla(two, 10 * service, params).qps
        assert 1.8 <= qps_two / qps_one <= 2.05

    def test_invalid_sla(self) -> None:
        """Test the target must be positive."""
        with pytest.raises(ValueError):
            max_qps_under_sla(single_core(), 0.0, TraceParams(trace_length=10, replicates=1))

    def test_lowest_feasible_p95(self) -> None:
        """Test the light-load p95 search returns a grid point."""
        params = TraceParams(trace_length=200, replicates=1)
        p95, batch, threshold = lowest_feasible_p95(RMC1, SKYLAKE, None, params, [4, 64, 1024])
        assert p95 > 0
        assert batch in (4, 64, 1024)
        assert threshold is None

    def test_warmup_follows_trace_params(self) -> None:
        """Test the SLA search and light-load search discard the warm-up share the trace parameters ask for."""
        original = Simulator.run
        seen: list[float] = []

        def recording_run(self: Simulator, trace: QueryTrace) -> SimResult:
            seen.append(self.cfg.warmup_fraction)
            return original(self, trace)

        params = TraceParams(trace_length=200, replicates=1, warmup_fraction=0.3)
        cfg = SchedulerConfig(batch_size=16, model=RMC1, cpu=SKYLAKE, sla_p95=0.1, warmup_fraction=0.0)
        with patch.object(Simulator, "run", autospec=True, side_effect=recording_run):
            max_qps_under_sla(cfg, 0.1, params)
            lowest_feasible_p95(RMC1, SKYLAKE, None, params, [4, 64])
        assert seen
        assert set(seen) == {0.3}

    def test_warmup_shrinks_window(self) -> None:
        """Test a larger warm-up share keeps fewer queries in the measured window."""
        trace = gen_trace(0, 5.0, FixedSize(size=4), 100, arrival="fixed")
        cfg = SchedulerConfig(batch_size=4, model=RMC1, cpu=SKYLAKE, sla_p95=1.0, warmup_fraction=0.0)
        assert len(simulate(trace, cfg).latencies) == 100
        assert len(simulate(trace, cfg.model_copy(update={"warmup_fraction": 0.5})).latencies) == 50

    def test_trace_length_at_rate(self) -> None:
        """Test an SLA horizon lengthens traces at high rates, never below trace_length nor above the cap."""
        params = TraceParams(trace_length=1000, sla_horizon=30, max_trace_length=50_000)
        assert params.length_at(10.0, 0.1) == 1000
        assert params.length_at(1000.0, 0.1) == 3000
        assert params.length_at(1e6, 0.1) == 50_000
        assert params.length_at(1e6) == 1000
        assert TraceParams(trace_length=1000).length_at(1e6, 0.1) == 1000

    def test_horizon_traces_in_sla_search(self) -> None:
        """Test each candidate rate is simulated on a trace spanning the SLA horizon."""
        lengths: dict[float, int] = {}

        def recording_gen(seed: int, lam: float, dist: object, n: int, arrival: str = "poisson") -> QueryTrace:
            lengths[lam] = n
            return gen_trace(seed, lam, dist, n, arrival)  # type: ignore[arg-type]

        params = TraceParams(trace_length=200, replicates=1, sla_horizon=5)
        cfg = SchedulerConfig(batch_size=16, model=RMC1, cpu=SKYLAKE, sla_p95=0.1)
        with patch("recsim.simulator.gen_trace", side_effect=recording_gen):
            max_qps_under_sla(cfg, 0.1, params)
        assert max(lengths.values()) > 200
        for lam, n in lengths.items():
            assert n == max(200, math.ceil(5 * 0.1 * lam))
