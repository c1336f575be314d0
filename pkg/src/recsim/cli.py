"""Console script for recsim."""

import json
import logging
import sys
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path
from typing import Any, TypeVar

import click
import pandas as pd
from pydantic import ValidationError

from .config import Config, ExperimentConfig, load_experiment
from .errors import ConfigError, InfeasibleSLA, ParseError, RecsimError
from .loadgen import export_trace, gen_trace, import_trace, trace_stats
from .models import FixedSize, LogNormalSize, NormalSize, ProductionHeavyTail, SchedulerConfig, SweepTable
from .platform import accelerator, cpu_platform, crossover_batch, list_platforms, transfer_share
from .repro import PROFILES, ReproRunner
from .report import ExperimentRunner, emit_report
from .simulator import Simulator, summarize
from .tuner import pareto, sweep, tune
from .zoo import builtin_model, dominant_category, list_models, time_breakdown

F = TypeVar("F", bound=Callable[..., Any])

DISTRIBUTIONS = {
    "fixed": FixedSize,
    "normal": NormalSize,
    "lognormal": LogNormalSize,
    "production": ProductionHeavyTail,
}

logger = logging.getLogger(__name__)


@contextmanager
def handle_errors(command: str) -> Iterator[None]:
    """Map recsim failures to exit codes: 2 for an infeasible SLA, 1 for everything else."""
    try:
        yield
    except InfeasibleSLA as e:
        click.echo(f"❌ Infeasible SLA: {e}", err=True)
        sys.exit(2)
    except (RecsimError, ValidationError, ValueError, OSError) as e:
        click.echo(f"💥 Fatal error: {str(e)}", err=True)
        logger.debug(f"Fatal error in {command}", exc_info=True)
        sys.exit(1)


def echo_json(data: Any) -> None:
    click.echo(json.dumps(data, indent=2, default=str))


def parse_sla(value: str | None) -> str | float | None:
    if value is None or value in ("low", "medium", "high"):
        return value
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"--sla: expected low, medium, high or seconds, got '{value}'") from None


def parse_int_list(value: str) -> list[int | None]:
    items: list[int | None] = []
    for part in value.split(","):
        part = part.strip().lower()
        items.append(None if part in ("none", "") else int(part))
    return items


def experiment_options(fn: F) -> F:
    """Options shared by commands that build an ExperimentConfig."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="Experiment JSON"),
        click.option("--model", help="Zoo model name"),
        click.option("--cpu", help="CPU platform (broadwell, skylake)"),
        click.option("--accel", help="Accelerator name (default); omit for CPU-only"),
        click.option("--sla", help="low, medium, high or explicit p95 seconds"),
        click.option("--dist", type=click.Choice(sorted(DISTRIBUTIONS)), help="Query size distribution"),
        click.option("--trace-length", type=int, help="Queries per evaluation trace"),
        click.option("--replicates", type=int, help="Seeds averaged per evaluation"),
        click.option("--seed", type=int, help="Base seed"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def build_experiment(config: Config, **opts: Any) -> ExperimentConfig:
    """Merge a config file, CLI options and environment overrides."""
    experiment = load_experiment(opts["config_path"]) if opts.get("config_path") else ExperimentConfig()
    updates: dict[str, Any] = {}
    for option, field in (
        ("model", "model"),
        ("cpu", "cpu"),
        ("accel", "accelerator"),
        ("trace_length", "trace_length"),
        ("replicates", "replicates"),
        ("seed", "base_seed"),
    ):
        if opts.get(option) is not None:
            updates[field] = opts[option]
    if opts.get("sla") is not None:
        updates["sla"] = parse_sla(opts["sla"])
    if opts.get("dist") is not None:
        updates["distribution"] = DISTRIBUTIONS[opts["dist"]]()
    if updates:
        experiment = ExperimentConfig.model_validate({**experiment.model_dump(), **updates})
    return experiment.with_overrides(config)


@click.group()
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
@click.pass_context
def main(ctx: click.Context, verbose: bool) -> None:
    """recsim - simulate and tune recommendation inference serving."""
    try:
        config = Config.from_env()
    except ValueError as e:
        click.echo(f"💥 Fatal error: {str(e)}", err=True)
        sys.exit(1)
    level = logging.DEBUG if verbose else getattr(logging, config.log_level, logging.INFO)
    # Setup logging
    logging.basicConfig(level=level, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    ctx.obj = config


# zoo


@main.group()
def zoo() -> None:
    """Inspect built-in models and platforms."""


@zoo.command("list")
def zoo_list() -> None:
    """List the built-in models."""
    for name in list_models():
        m = builtin_model(name)
        dense = "-".join(map(str, m.dense_fc.dims)) if m.dense_fc else "-"
        predict = "-".join(map(str, m.predict_fc.dims))
        emb = m.embeddings
        click.echo(
            f"{name:10} dense={dense:14} predict={predict:14} x{m.num_parallel_predict_stacks} "
            f"tables={emb.num_tables:3} lookups={emb.lookups_per_table:4} pooling={emb.pooling.value}"
        )


@zoo.command("platforms")
def zoo_platforms() -> None:
    """List CPU platforms and accelerators."""
    names = list_platforms()
    echo_json(
        {
            "cpu": {n: cpu_platform(n).model_dump() for n in names["cpu"]},
            "accelerator": {n: accelerator(n).model_dump() for n in names["accelerator"]},
        }
    )


@zoo.command("breakdown")
@click.option("--model", required=True)
@click.option("--cpu", default="broadwell", show_default=True)
@click.option("--batch", type=int, default=64, show_default=True)
@click.option("--active-cores", type=int, help="Busy cores (default: all)")
def zoo_breakdown(model: str, cpu: str, batch: int, active_cores: int | None) -> None:
    """Per-category CPU time of one request."""
    with handle_errors("zoo breakdown"):
        spec = builtin_model(model)
        platform = cpu_platform(cpu)
        breakdown = time_breakdown(spec, platform, batch, active_cores)
        total = sum(breakdown.values())
        for category, seconds in breakdown.items():
            click.echo(f"{category.value:16} {seconds * 1e6:12.2f} us {seconds / total:7.1%}")
        click.echo(f"dominant: {dominant_category(spec, platform, batch, active_cores).value}")


@zoo.command("crossover")
@click.option("--cpu", default="skylake", show_default=True)
@click.option("--accel", default="default", show_default=True)
def zoo_crossover(cpu: str, accel: str) -> None:
    """Batch size at which the accelerator beats one CPU core, per model."""
    with handle_errors("zoo crossover"):
        platform, device = cpu_platform(cpu), accelerator(accel)
        for name in list_models():
            spec = builtin_model(name)
            click.echo(
                f"{name:10} crossover={crossover_batch(spec, platform, device)} "
                f"transfer_share={transfer_share(spec, device):.3f}"
            )


# trace


@main.group()
def trace() -> None:
    """Generate and inspect query traces."""


@trace.command("gen")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--lambda", "lam", type=float, required=True, help="Arrival rate (queries/s)")
@click.option("-n", "--count", type=int, default=50_000, show_default=True)
@click.option("--dist", type=click.Choice(sorted(DISTRIBUTIONS)), default="production", show_default=True)
@click.option("--arrival", type=click.Choice(["poisson", "fixed", "normal"]), default="poisson", show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False), required=True)
def trace_gen(seed: int, lam: float, count: int, dist: str, arrival: str, output: str) -> None:
    """Generate a trace file."""
    with handle_errors("trace gen"):
        t = gen_trace(seed, lam, DISTRIBUTIONS[dist](), count, arrival)  # type: ignore[arg-type]
        export_trace(t, output)
        click.echo(f"✅ Wrote {len(t)} queries to {output}", err=True)


@trace.command("stats")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def trace_stats_cmd(path: str) -> None:
    """Print size and gap statistics of a trace file."""
    with handle_errors("trace stats"):
        echo_json(trace_stats(import_trace(path)).model_dump())


@trace.command("validate")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def trace_validate(path: str) -> None:
    """Check that a trace file parses."""
    try:
        t = import_trace(path)
    except ParseError as e:
        click.echo(f"❌ {path}: {e}", err=True)
        sys.exit(1)
    click.echo(f"✅ {path}: {len(t)} queries")


# simulation and tuning


@main.command()
@experiment_options
@click.option("--batch", type=int, required=True, help="Items per CPU request")
@click.option("--threshold", type=int, help="Offload queries larger than this")
@click.option("--lambda", "lam", type=float, help="Arrival rate; default is --load of the capacity ceiling")
@click.option("--load", type=float, default=0.5, show_default=True, help="Fraction of the capacity ceiling")
@click.option("--latency-csv", type=click.Path(dir_okay=False), help="Write per-query latencies")
@click.option("--event-log", type=click.Path(dir_okay=False), help="Write the scheduler event log")
@click.pass_obj
def simulate(
    config: Config,
    batch: int,
    threshold: int | None,
    lam: float | None,
    load: float,
    latency_csv: str | None,
    event_log: str | None,
    **opts: Any,
) -> None:
    """Simulate one configuration and print a JSON summary."""
    with handle_errors("simulate"):
        experiment = build_experiment(config, **opts)
        model = experiment.resolve_model()
        sla = experiment.sla_seconds(model)
        cfg = SchedulerConfig(
            batch_size=batch,
            offload_threshold=threshold,
            model=model,
            cpu=experiment.resolve_cpu(),
            accel=experiment.resolve_accelerator(),
            sla_p95=sla,
            warmup_fraction=experiment.warmup_fraction,
        )
        sim = Simulator(cfg, record_events=event_log is not None)
        params = experiment.trace_params()
        if lam is None:
            sizes = gen_trace(params.base_seed, 1.0, params.distribution, params.trace_length, params.arrival).sizes
            lam = load * sim.capacity_ceiling(sizes.tolist())
        t = gen_trace(params.base_seed, lam, params.distribution, params.trace_length, params.arrival)
        result = sim.run(t)
        p95 = summarize(result).p95
        echo_json({"model": model.name, "lambda": lam, "sla": sla, "sla_met": p95 <= sla, **result.to_summary()})
        if latency_csv:
            result.write_latency_csv(latency_csv)
        if event_log:
            pd.DataFrame([asdict(e) for e in result.events]).to_csv(event_log, index=False, lineterminator="\n")


@main.command("tune")
@experiment_options
@click.pass_obj
def tune_cmd(config: Config, **opts: Any) -> None:
    """Tune batch size and offload threshold for max QPS under the SLA."""
    with handle_errors("tune"):
        experiment = build_experiment(config, **opts)
        model = experiment.resolve_model()
        sla = experiment.sla_seconds(model)
        click.echo(f"🔧 Tuning {model.name} at p95 <= {sla * 1e3:g} ms", err=True)
        tuned = tune(model, experiment.resolve_cpu(), experiment.resolve_accelerator(), sla, experiment.trace_params())
        echo_json(tuned.model_dump())


@main.command("sweep")
@experiment_options
@click.option("--batches", default=None, help="Comma-separated batch grid (default: config batch_grid)")
@click.option("--thresholds", default=None, help="Comma-separated threshold grid, 'none' for no offload")
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="CSV path (default: stdout)")
@click.option("--json", "json_path", type=click.Path(dir_okay=False), help="Also write the table as JSON")
@click.option("--workers", type=int, help="Worker processes (default: RECSIM_WORKERS)")
@click.pass_obj
def sweep_cmd(
    config: Config,
    batches: str | None,
    thresholds: str | None,
    output: str | None,
    json_path: str | None,
    workers: int | None,
    **opts: Any,
) -> None:
    """Evaluate every grid point."""
    with handle_errors("sweep"):
        experiment = build_experiment(config, **opts)
        model = experiment.resolve_model()
        batch_grid = [b for b in parse_int_list(batches) if b is not None] if batches else experiment.batch_grid
        threshold_grid = parse_int_list(thresholds) if thresholds else experiment.threshold_grid
        table = sweep(
            model,
            experiment.resolve_cpu(),
            experiment.resolve_accelerator(),
            [experiment.sla_seconds(model)],
            batch_grid,
            threshold_grid,
            experiment.trace_params(),
            workers=workers or config.workers,
        )
        if output:
            table.to_csv(output)
            click.echo(f"✅ Wrote {len(table.rows)} rows to {output}", err=True)
        else:
            click.echo(table.to_frame().to_csv(index=False, lineterminator="\n"), nl=False)
        if json_path:
            table.to_json(json_path)


@main.command("pareto")
@click.argument("sweep_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("-o", "--output", type=click.Path(dir_okay=False), help="CSV path (default: stdout)")
def pareto_cmd(sweep_csv: str, output: str | None) -> None:
    """Print the Pareto frontier (max QPS, min p95) of a sweep CSV."""
    with handle_errors("pareto"):
        table = SweepTable.from_csv(sweep_csv)
        frontier = SweepTable(model=table.model, rows=pareto(table))
        if output:
            frontier.to_csv(output)
            click.echo(f"✅ {len(frontier.rows)} Pareto rows written to {output}", err=True)
        else:
            click.echo(frontier.to_frame().to_csv(index=False, lineterminator="\n"), nl=False)


# reports


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out-dir", type=click.Path(file_okay=False), required=True)
@click.option("--workers", type=int, help="Worker processes (default: RECSIM_WORKERS)")
@click.option("--no-sweep", is_flag=True, help="Skip the Pareto sweep")
@click.pass_obj
def report(config: Config, config_path: str, out_dir: str, workers: int | None, no_sweep: bool) -> None:
    """Run static and tuned schedulers and write report.csv and pareto.csv."""
    with handle_errors("report"):
        experiment = load_experiment(config_path).with_overrides(config)
        runner = ExperimentRunner(experiment, workers=workers or config.workers)
        click.echo(f"📊 Running {len(runner.jobs())} report jobs", err=True)
        for path in emit_report(runner.run(with_sweeps=not no_sweep), out_dir):
            click.echo(f"✅ Wrote {path}", err=True)


@main.command()
@click.option("--out-dir", type=click.Path(file_okay=False), default="repro-out", show_default=True)
@click.option("--profile", type=click.Choice(sorted(PROFILES)), default="desk", show_default=True)
@click.option("--only", multiple=True, help="Run only the named check (repeatable)")
@click.option("--workers", type=int, help="Worker processes (default: RECSIM_WORKERS)")
@click.pass_obj
def repro(config: Config, out_dir: str, profile: str, only: tuple[str, ...], workers: int | None) -> None:
    """Run the reproduction checks and print PASS/FAIL per check."""
    with handle_errors("repro"):
        runner = ReproRunner(
            PROFILES[profile], Path(out_dir), workers=workers or config.workers, seed=config.seed_override or 0
        )
        results = runner.run(list(only) or None)
        click.echo(runner.format_results(results))
        if not all(r.passed for r in results):
            sys.exit(1)


if __name__ == "__main__":
    main()
