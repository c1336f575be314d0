"""
Seeded query trace generation, statistics, and the trace file format.

A trace is generated from two independent child streams of the seed: one for
inter-arrival gaps and one for sizes. Sizes therefore do not depend on the
arrival rate, and gaps for different rates are exact rescalings of each other.
"""

import logging
import math
import re
from collections.abc import Callable
from pathlib import Path

import numpy as np
from pydantic import TypeAdapter, ValidationError

from .errors import InvalidDistribution, ParseError
from .models import (
    AcceleratorSpec,
    ArrivalProcess,
    CpuPlatformSpec,
    FixedSize,
    LogNormalSize,
    ModelSpec,
    NormalSize,
    ProductionHeavyTail,
    QueryTrace,
    SizeDistribution,
    TraceStats,
)
from .utils import nearest_rank, top_share

logger = logging.getLogger(__name__)

TRACE_MAGIC = "#recsim-trace v1"
_HEADER = re.compile(r"^#recsim-trace v1 seed=(\d+) lambda=(\S+)$")
_DIST_PREFIX = "#dist "
_DISTRIBUTION = TypeAdapter(SizeDistribution)
# Coefficient of variation of "normal" inter-arrival gaps.
NORMAL_GAP_CV = 0.25


def _validate(dist: FixedSize | NormalSize | LogNormalSize | ProductionHeavyTail) -> None:
    params = dist.parameters()
    bad = [name for name, value in params.items() if not math.isfinite(value)]
    if bad:
        raise InvalidDistribution(f"{dist.kind} distribution has non-finite parameters: {', '.join(bad)}")
    if isinstance(dist, NormalSize | LogNormalSize) and dist.sigma < 0:
        raise InvalidDistribution(f"sigma must be >= 0, got {dist.sigma}")
    if isinstance(dist, ProductionHeavyTail):
        if dist.body_sigma < 0:
            raise InvalidDistribution(f"body_sigma must be >= 0, got {dist.body_sigma}")
        if dist.tail_alpha <= 0:
            raise InvalidDistribution(f"tail_alpha must be > 0, got {dist.tail_alpha}")
        if not 0 <= dist.tail_weight <= 1:
            raise InvalidDistribution(f"tail_weight must be in [0, 1], got {dist.tail_weight}")


def sample_sizes(
    rng: np.random.Generator,
    dist: FixedSize | NormalSize | LogNormalSize | ProductionHeavyTail,
    n: int,
) -> np.ndarray:
    """Draw n integer query sizes clamped to [1, max_size]."""
    _validate(dist)
    if isinstance(dist, FixedSize):
        raw = np.full(n, dist.size, dtype=float)
    elif isinstance(dist, NormalSize):
        raw = rng.normal(dist.mu, dist.sigma, n)
    elif isinstance(dist, LogNormalSize):
        raw = rng.lognormal(dist.mu, dist.sigma, n)
    else:
        in_tail = rng.random(n) < dist.tail_weight
        body = rng.lognormal(dist.body_mu, dist.body_sigma, n)
        # numpy's pareto is Lomax; shift and scale to a Pareto with x_min at the body median.
        tail = math.exp(dist.body_mu) * (1.0 + rng.pareto(dist.tail_alpha, n))
        raw = np.where(in_tail, tail, body)
    return np.clip(np.rint(raw), 1, dist.max_size).astype(np.int64)


def gen_trace(
    seed: int,
    lam: float,
    dist: FixedSize | NormalSize | LogNormalSize | ProductionHeavyTail,
    n: int,
    arrival: ArrivalProcess = "poisson",
) -> QueryTrace:
    """Generate an open-loop trace of n queries arriving at rate lam."""
    if not (math.isfinite(lam) and lam > 0):
        raise ValueError(f"lambda must be a positive finite rate, got {lam}")
    if n < 1:
        raise ValueError(f"trace length must be >= 1, got {n}")

    gap_seq, size_seq = np.random.SeedSequence(seed).spawn(2)
    gap_rng = np.random.default_rng(gap_seq)
    if arrival == "poisson":
        gaps = gap_rng.exponential(1.0 / lam, n)
    elif arrival == "normal":
        # Negative draws clamp to zero: back-to-back arrivals share a timestamp.
        gaps = np.maximum(gap_rng.normal(1.0, NORMAL_GAP_CV, n), 0.0) / lam
    else:
        gaps = np.full(n, 1.0 / lam)
    sizes = sample_sizes(np.random.default_rng(size_seq), dist, n)

    logger.debug(f"Generated trace seed={seed} lambda={lam} n={n} dist={dist.kind}")
    return QueryTrace(seed=seed, lam=lam, arrivals=np.cumsum(gaps), sizes=sizes, distribution=dist)


def trace_stats(trace: QueryTrace) -> TraceStats:
    """Size percentiles, gap moments and tail mass of a trace."""
    n = len(trace)
    if n == 0:
        raise ValueError("trace_stats needs a non-empty trace")
    sizes = np.sort(trace.sizes)
    gaps = np.diff(trace.arrivals, prepend=0.0)
    return TraceStats(
        count=n,
        mean_size=float(np.mean(sizes)),
        p50_size=int(nearest_rank(sizes, 50)),
        p95_size=int(nearest_rank(sizes, 95)),
        p99_size=int(nearest_rank(sizes, 99)),
        max_size=int(sizes[-1]),
        mean_gap=float(np.mean(gaps)),
        gap_variance=float(np.var(gaps)),
        top_quartile_work_share=top_share(sizes),
        survival_above_500=float(np.mean(sizes > 500)),
    )


def execution_mass(
    trace: QueryTrace, model: ModelSpec, cpu: CpuPlatformSpec, accel: AcceleratorSpec | None = None
) -> dict[str, float]:
    """Share of single-core CPU (and accelerator) execution time spent on the largest quarter of queries."""
    from .platform import accel_service_time, cpu_service_time

    unique, counts = np.unique(trace.sizes, return_counts=True)
    mass = {"cpu": top_share(_expand(unique, counts, lambda s: cpu_service_time(model, s, 1, cpu).total))}
    if accel is not None:
        mass["accel"] = top_share(_expand(unique, counts, lambda s: accel_service_time(model, s, accel).total))
    return mass


def _expand(unique: np.ndarray, counts: np.ndarray, cost: Callable[[int], float]) -> np.ndarray:
    per_size = np.array([cost(int(s)) for s in unique])
    return np.repeat(per_size, counts)


def export_trace(trace: QueryTrace, path: str | Path) -> None:
    """Write a trace as tab-separated records under a versioned header."""
    lines = [f"{TRACE_MAGIC} seed={trace.seed} lambda={trace.lam!r}"]
    if trace.distribution is not None:
        lines.append(_DIST_PREFIX + trace.distribution.model_dump_json())
    lines.extend(f"{a!r}\t{s}" for a, s in trace.records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def import_trace(path: str | Path) -> QueryTrace:
    """Read a trace file written by export_trace (or by hand)."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty file, expected trace header", 1)

    header = _HEADER.match(lines[0].strip())
    if header is None:
        raise ParseError(f"expected header '{TRACE_MAGIC} seed=<int> lambda=<float>'", 1)
    seed = int(header.group(1))
    try:
        lam = float(header.group(2))
    except ValueError:
        raise ParseError(f"invalid lambda '{header.group(2)}'", 1) from None

    body_start = 1
    distribution = None
    if len(lines) > 1 and lines[1].startswith(_DIST_PREFIX):
        try:
            distribution = _DISTRIBUTION.validate_json(lines[1][len(_DIST_PREFIX) :])
        except ValidationError as e:
            raise ParseError(f"invalid distribution: {e.errors()[0]['msg']}", 2) from None
        body_start = 2

    arrivals: list[float] = []
    sizes: list[int] = []
    max_size = distribution.max_size if distribution is not None else None
    for line_number, line in enumerate(lines[body_start:], start=body_start + 1):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise ParseError(f"expected 'arrival<TAB>size', got {line!r}", line_number)
        try:
            arrival = float(fields[0])
            size = int(fields[1])
        except ValueError:
            raise ParseError(f"non-numeric record {line!r}", line_number) from None
        if not math.isfinite(arrival) or arrival < 0:
            raise ParseError(f"arrival must be finite and >= 0, got {fields[0]}", line_number)
        if arrivals and arrival < arrivals[-1]:
            raise ParseError(f"arrival {arrival} is earlier than previous {arrivals[-1]}", line_number)
        if size < 1 or (max_size is not None and size > max_size):
            raise ParseError(f"size {size} outside [1, {max_size or 'inf'}]", line_number)
        arrivals.append(arrival)
        sizes.append(size)

    if not arrivals:
        raise ParseError("trace has no records", len(lines) + 1)

    return QueryTrace(
        seed=seed,
        lam=lam,
        arrivals=np.array(arrivals, dtype=float),
        sizes=np.array(sizes, dtype=np.int64),
        distribution=distribution,
    )
