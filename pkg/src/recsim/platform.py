"""
Cost and power models for CPU servers and the offload accelerator.

CPU time is a per-category roofline: each operator category costs the larger of
its compute time (SIMD efficiency grows with batch) and its memory time (the
core's bandwidth share shrinks, and contention grows, with active cores).
Accelerator time is a host-to-device transfer followed by a roofline over the
whole query, without overlap.
"""

import logging
from collections.abc import Iterable

from .errors import UnknownPlatform
from .models import AcceleratorSpec, CpuPlatformSpec, ModelSpec, OpCategory, ServiceTime
from .zoo import ELEMENT_BYTES, work

logger = logging.getLogger(__name__)

INDEX_BYTES = 8
MAX_SCAN_BATCH = 1024

BROADWELL = CpuPlatformSpec(
    name="broadwell",
    cores=28,
    flops_per_core_peak=2.4e9 * 2 * 8 * 2,  # AVX-256 FMA, two ports
    simd_eff_floor=0.4,
    simd_saturation_batch=32,
    mem_bandwidth_total=60e9,
    contention_coeff=7.5,
    tdp=120.0,
)

SKYLAKE = CpuPlatformSpec(
    name="skylake",
    cores=40,
    flops_per_core_peak=2.0e9 * 2 * 16 * 2,  # AVX-512 FMA, two ports
    simd_eff_floor=0.25,
    simd_saturation_batch=128,
    mem_bandwidth_total=90e9,
    contention_coeff=2.0,
    tdp=125.0,
)

DEFAULT_ACCELERATOR = AcceleratorSpec(
    name="default",
    flops_peak=11.3e12,
    mem_bandwidth=484e9,
    transfer_fixed=50e-6,
    transfer_per_byte=1 / 24e9,
    power=250.0,
)

_CPUS = {p.name: p for p in (BROADWELL, SKYLAKE)}
_ACCELERATORS = {"default": DEFAULT_ACCELERATOR, "1080ti": DEFAULT_ACCELERATOR}


def list_platforms() -> dict[str, list[str]]:
    """Registered CPU and accelerator names."""
    return {"cpu": list(_CPUS), "accelerator": list(_ACCELERATORS)}


def cpu_platform(name: str) -> CpuPlatformSpec:
    try:
        return _CPUS[name.lower()]
    except KeyError:
        raise UnknownPlatform(f"Unknown CPU platform '{name}'. Available: {', '.join(_CPUS)}") from None


def accelerator(name: str) -> AcceleratorSpec:
    try:
        return _ACCELERATORS[name.lower()]
    except KeyError:
        raise UnknownPlatform(f"Unknown accelerator '{name}'. Available: {', '.join(_ACCELERATORS)}") from None


def simd_efficiency(cpu: CpuPlatformSpec, batch: int) -> float:
    """Fraction of peak SIMD throughput reached at a given batch size."""
    eps0 = cpu.simd_eff_floor
    return min(1.0, eps0 + (1.0 - eps0) * batch / cpu.simd_saturation_batch)


def contention_factor(cpu: CpuPlatformSpec, active_cores: int) -> float:
    """Memory slowdown multiplier with `active_cores` cores busy."""
    if cpu.cores == 1:
        return 1.0
    return 1.0 + cpu.contention_coeff * (active_cores - 1) / (cpu.cores - 1)


def cpu_service_time(model: ModelSpec, batch: int, active_cores: int, platform: CpuPlatformSpec) -> ServiceTime:
    """Time for one core to run `batch` items while `active_cores` cores are busy."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")
    if not 1 <= active_cores <= platform.cores:
        raise ValueError(f"active_cores must be in [1, {platform.cores}], got {active_cores}")

    flop_rate = platform.flops_per_core_peak * simd_efficiency(platform, batch)
    byte_rate = platform.mem_bandwidth_total / (active_cores * contention_factor(platform, active_cores))

    breakdown = {
        cat: max(w.flops / flop_rate, w.nbytes / byte_rate) for cat, w in work(model, batch).categories.items()
    }
    return ServiceTime(total=sum(breakdown.values()), breakdown=breakdown)


def input_bytes(model: ModelSpec, query_size: int) -> int:
    """Bytes shipped to the accelerator: dense features plus sparse ids."""
    emb = model.embeddings
    per_item = model.dense_input_dim * ELEMENT_BYTES + emb.num_tables * emb.lookups_per_table * INDEX_BYTES
    return per_item * query_size


def accel_service_time(model: ModelSpec, query_size: int, spec: AcceleratorSpec) -> ServiceTime:
    """Transfer plus roofline compute for a whole query on the accelerator."""
    if query_size < 1:
        raise ValueError(f"query_size must be >= 1, got {query_size}")

    wb = work(model, query_size)
    transfer = spec.transfer_fixed + spec.transfer_per_byte * input_bytes(model, query_size)
    compute = max(wb.total_flops / spec.flops_peak, wb.total_bytes / spec.mem_bandwidth)

    # Apportion compute across categories by their own roofline times.
    weights = {
        cat: max(w.flops / spec.flops_peak, w.nbytes / spec.mem_bandwidth) for cat, w in wb.categories.items()
    }
    weight_sum = sum(weights.values())
    if weight_sum > 0:
        breakdown = {cat: compute * w / weight_sum for cat, w in weights.items()}
    else:
        breakdown = {cat: 0.0 for cat in OpCategory}
    return ServiceTime(total=transfer + compute, breakdown=breakdown, transfer=transfer)


def crossover_batch(model: ModelSpec, cpu: CpuPlatformSpec, accel: AcceleratorSpec) -> int | None:
    """Smallest batch in [1, 1024] where the accelerator beats one CPU core."""
    for b in range(1, MAX_SCAN_BATCH + 1):
        if accel_service_time(model, b, accel).total < cpu_service_time(model, b, 1, cpu).total:
            logger.debug(f"{model.name}: accelerator crossover at batch {b} vs {cpu.name}")
            return b
    return None


def speedup_curve(
    model: ModelSpec, cpu: CpuPlatformSpec, accel: AcceleratorSpec, batches: Iterable[int]
) -> dict[int, float]:
    """Accelerator speedup over a single CPU core for each batch size."""
    return {
        b: cpu_service_time(model, b, 1, cpu).total / accel_service_time(model, b, accel).total for b in batches
    }


def transfer_share(model: ModelSpec, accel: AcceleratorSpec, sizes: Iterable[int] = (16, 64, 256, 1024)) -> float:
    """Mean fraction of accelerator time spent on data transfer."""
    shares = []
    for size in sizes:
        st = accel_service_time(model, size, accel)
        shares.append(st.transfer / st.total)
    if not shares:
        raise ValueError("transfer_share needs at least one query size")
    return sum(shares) / len(shares)


def power(cpu: CpuPlatformSpec, accel: AcceleratorSpec | None = None) -> float:
    """Provisioned power in watts; independent of utilization."""
    return cpu.tdp + (accel.power if accel is not None else 0.0)
