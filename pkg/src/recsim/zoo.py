"""
Model zoo - the eight built-in recommendation archetypes and their work accounting.

Every model follows the same generalized layout: an optional Dense-FC stack over
dense features, embedding table lookups combined by a pooling operator, a
feature interaction that concatenates both branches, and one or more Predict-FC
stacks on top. Work is counted per operator category in flops and bytes with
4-byte elements.
"""

import logging
from typing import TYPE_CHECKING

from .errors import UnknownModel
from .models import EmbeddingConfig, LayerStack, ModelSpec, OpCategory, OpWork, Pooling, WorkBreakdown

if TYPE_CHECKING:
    from .models import CpuPlatformSpec

logger = logging.getLogger(__name__)

ELEMENT_BYTES = 4
EMBEDDING_DIM = 32
DLRM_DENSE_INPUT = 256


def _model(
    name: str,
    predict: tuple[int, ...],
    tables: int,
    lookups: int,
    pooling: Pooling,
    dense: tuple[int, ...] | None = None,
    dense_input_dim: int = 0,
    stacks: int = 1,
    hidden: int | None = None,
) -> ModelSpec:
    return ModelSpec(
        name=name,
        dense_fc=LayerStack(dims=dense) if dense else None,
        predict_fc=LayerStack(dims=predict),
        num_parallel_predict_stacks=stacks,
        embeddings=EmbeddingConfig(
            num_tables=tables, lookups_per_table=lookups, embedding_dim=EMBEDDING_DIM, pooling=pooling
        ),
        dense_input_dim=dense_input_dim,
        recurrent_hidden_dim=hidden,
    )


_ZOO: dict[str, ModelSpec] = {
    "NCF": _model("NCF", (256, 256, 128), tables=4, lookups=1, pooling=Pooling.CONCAT),
    "WND": _model("WND", (1024, 512, 256), tables=20, lookups=1, pooling=Pooling.CONCAT, dense_input_dim=1000),
    "MT-WND": _model(
        "MT-WND", (1024, 512, 256), tables=20, lookups=1, pooling=Pooling.CONCAT, dense_input_dim=1000, stacks=4
    ),
    "DLRM-RMC1": _model(
        "DLRM-RMC1",
        (256, 64, 1),
        tables=10,
        lookups=80,
        pooling=Pooling.SUM,
        dense=(256, 128, 32),
        dense_input_dim=DLRM_DENSE_INPUT,
    ),
    "DLRM-RMC2": _model(
        "DLRM-RMC2",
        (512, 128, 1),
        tables=40,
        lookups=80,
        pooling=Pooling.SUM,
        dense=(256, 128, 32),
        dense_input_dim=DLRM_DENSE_INPUT,
    ),
    "DLRM-RMC3": _model(
        "DLRM-RMC3",
        (512, 128, 1),
        tables=10,
        lookups=20,
        pooling=Pooling.SUM,
        dense=(2560, 512, 32),
        dense_input_dim=DLRM_DENSE_INPUT,
    ),
    "DIN": _model("DIN", (200, 80, 2), tables=20, lookups=200, pooling=Pooling.ATTENTION_FC),
    "DIEN": _model("DIEN", (200, 80, 2), tables=20, lookups=20, pooling=Pooling.ATTENTION_RNN, hidden=64),
}

# Medium p95 targets in seconds; low and high are 0.5x and 1.5x.
MEDIUM_SLA: dict[str, float] = {
    "DLRM-RMC1": 0.100,
    "DLRM-RMC2": 0.400,
    "DLRM-RMC3": 0.100,
    "NCF": 0.005,
    "WND": 0.025,
    "MT-WND": 0.025,
    "DIN": 0.100,
    "DIEN": 0.035,
}

SLA_SCALE: dict[str, float] = {"low": 0.5, "medium": 1.0, "high": 1.5}


def list_models() -> list[str]:
    """Names of the built-in models in table order."""
    return list(_ZOO)


def builtin_model(name: str) -> ModelSpec:
    """Return a built-in model by name."""
    try:
        return _ZOO[name]
    except KeyError:
        raise UnknownModel(f"Unknown model '{name}'. Available: {', '.join(_ZOO)}") from None


def sla_target(model: str, level: str) -> float:
    """p95 target in seconds for a built-in model at the low/medium/high level."""
    if model not in MEDIUM_SLA:
        raise UnknownModel(f"No SLA target for model '{model}'; pass explicit seconds")
    if level not in SLA_SCALE:
        raise ValueError(f"SLA level must be one of {sorted(SLA_SCALE)}, got '{level}'")
    return MEDIUM_SLA[model] * SLA_SCALE[level]


def _fc_stack(d_in: int, dims: tuple[int, ...], batch: int) -> tuple[int, int, int]:
    """Flops, activation bytes and output width of an FC stack."""
    flops = 0
    nbytes = 0
    for d_out in dims:
        flops += 2 * batch * d_in * d_out
        nbytes += ELEMENT_BYTES * batch * (d_in + d_out)
        d_in = d_out
    return flops, nbytes, d_in


def work(model: ModelSpec, batch: int) -> WorkBreakdown:
    """Per-category flops and bytes of one inference over `batch` items."""
    if batch < 1:
        raise ValueError(f"batch must be >= 1, got {batch}")

    emb = model.embeddings
    dim = emb.embedding_dim
    lookups = emb.num_tables * emb.lookups_per_table
    cats = {cat: OpWork() for cat in OpCategory}

    dense_width = model.dense_input_dim
    if model.dense_fc is not None:
        flops, nbytes, dense_width = _fc_stack(model.dense_input_dim, model.dense_fc.dims, batch)
        cats[OpCategory.DENSE_FC] = OpWork(flops=flops, nbytes=nbytes)

    cats[OpCategory.EMBEDDING_LOOKUP] = OpWork(nbytes=ELEMENT_BYTES * batch * lookups * dim)

    if emb.pooling is Pooling.SUM:
        pooled_width = emb.num_tables * dim
        cats[OpCategory.POOLING] = OpWork(flops=batch * lookups * dim, nbytes=ELEMENT_BYTES * batch * pooled_width)
    elif emb.pooling is Pooling.CONCAT:
        pooled_width = lookups * dim
        cats[OpCategory.POOLING] = OpWork(nbytes=ELEMENT_BYTES * batch * pooled_width)
    else:
        # Local activation unit: one DxD FC pass per looked-up vector, then a weighted sum.
        cats[OpCategory.ATTENTION] = OpWork(
            flops=2 * batch * lookups * dim * dim, nbytes=ELEMENT_BYTES * batch * lookups * dim
        )
        if emb.pooling is Pooling.ATTENTION_FC:
            pooled_width = emb.num_tables * dim
        else:
            hidden = model.recurrent_hidden_dim or 0
            pooled_width = hidden
            # One timestep per behaviour position; its input concatenates one vector per table.
            steps = emb.lookups_per_table
            gate_in = emb.num_tables * dim + hidden
            cats[OpCategory.RECURRENT] = OpWork(
                flops=batch * steps * 3 * 2 * gate_in * hidden,
                nbytes=ELEMENT_BYTES * batch * steps * gate_in,
            )
        cats[OpCategory.POOLING] = OpWork(
            flops=2 * batch * lookups * dim, nbytes=ELEMENT_BYTES * batch * pooled_width
        )

    interaction_width = dense_width + pooled_width
    cats[OpCategory.INTERACTION] = OpWork(nbytes=ELEMENT_BYTES * batch * interaction_width)

    flops, nbytes, _ = _fc_stack(interaction_width, model.predict_fc.dims, batch)
    stacks = model.num_parallel_predict_stacks
    cats[OpCategory.PREDICT_FC] = OpWork(flops=stacks * flops, nbytes=stacks * nbytes)

    return WorkBreakdown(batch=batch, categories=cats)


def time_breakdown(
    model: ModelSpec, platform: "CpuPlatformSpec", batch: int, active_cores: int | None = None
) -> dict[OpCategory, float]:
    """Modeled seconds per operator category on a CPU; all cores active by default."""
    from .platform import cpu_service_time

    cores = platform.cores if active_cores is None else active_cores
    return cpu_service_time(model, batch, cores, platform).breakdown


def dominant_category(
    model: ModelSpec, platform: "CpuPlatformSpec", batch: int, active_cores: int | None = None
) -> OpCategory:
    """Operator category with the largest share of modeled CPU time."""
    breakdown = time_breakdown(model, platform, batch, active_cores)
    # max() keeps the first category on ties, i.e. declaration order.
    dominant = max(breakdown, key=lambda cat: breakdown[cat])
    logger.debug(f"{model.name} @ batch {batch} on {platform.name}: dominated by {dominant.value}")
    return dominant
