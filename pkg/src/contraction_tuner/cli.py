"""Command line interface for contraction-tuner."""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
import yaml
from rich.console import Console
from rich.table import Table

from .backend_manager import BackendManager, make_backend
from .config import Config, TrainConfig
from .contraction import describe, lower, parse_spec
from .dataset import generate_matmul_dataset, read_dataset, write_dataset
from .features import loop_strides
from .models import Action, BackendKind, ResultRecord
from .policy import load_checkpoint
from .report_manager import ReportManager
from .trainer import train_policy
from .transforms import apply
from .tuning_manager import KNOWN_METHODS, POLICY, TuningManager
from .utils import format_duration, setup_logging


console = Console()
logger = logging.getLogger(__name__)

BACKEND_CHOICE = click.Choice([kind.value for kind in BackendKind])


def _load_config(ctx: click.Context, backend: Optional[str] = None) -> Config:
    config: Config = ctx.obj["config"]
    if backend is not None:
        config = config.model_copy(deep=True)
        config.backend.backend = BackendKind(backend)
    return config


def _read_overrides(path: str) -> Dict[str, Any]:
    """``key = value`` lines; values are parsed as YAML scalars or lists."""
    overrides: Dict[str, Any] = {}
    for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise click.BadParameter(f"line {number}: expected key = value, got {raw!r}")
        overrides[key.strip()] = yaml.safe_load(value.strip())
    return overrides


def _print_records(records: List[ResultRecord], title: str) -> None:
    table = Table(title=title)
    table.add_column("Benchmark", style="cyan")
    table.add_column("Method", style="magenta")
    table.add_column("GFLOPS", style="green", justify="right")
    table.add_column("Speedup", style="yellow", justify="right")
    table.add_column("Evals", justify="right")
    table.add_column("Time", justify="right")
    for record in records:
        table.add_row(
            record.benchmark,
            record.method,
            f"{record.gflops:.4f}",
            f"{record.gflops / record.initial_gflops:.2f}x",
            str(record.evals),
            format_duration(record.wall_time_s),
        )
    console.print(table)


@click.group()
@click.option("--config", "-c", type=click.Path(exists=True), help="Path to configuration file")
@click.option("--verbose", "-v", is_flag=True, help="Enable verbose logging")
@click.pass_context
def cli(ctx, config: Optional[str], verbose: bool):
    """contraction-tuner - loop-nest schedule search and Q-learning for tensor contractions."""
    try:
        ctx.ensure_object(dict)
        loaded = Config.load_from_file(config)
        level = "DEBUG" if verbose else loaded.logging.level
        setup_logging(level, loaded.logging.format, loaded.logging.file_path)
        ctx.obj["config"] = loaded
        ctx.obj["config_path"] = config
        ctx.obj["verbose"] = verbose
    except Exception as e:
        console.print(f"[red]Error loading configuration: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.option("--path", default="config/config.yaml", prompt="Configuration file path", help="Where to write the file")
def init(path: str):
    """Write a configuration file with every default."""
    try:
        Config().save_to_file(path)
        console.print(f"[green]✓ Configuration saved to {path}[/green]")
        console.print("[blue]Edit the backend, search and train sections to suit your machine[/blue]")
    except Exception as e:
        console.print(f"[red]Error initializing configuration: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False), help="Dataset file to write")
@click.option("--seed", type=int, default=None, help="Shuffle seed (default from config)")
@click.pass_context
def gen(ctx, out: str, seed: Optional[int]):
    """Generate the matmul benchmark dataset with its train/test split."""
    try:
        config = _load_config(ctx)
        seed = config.dataset.seed if seed is None else seed
        dataset = generate_matmul_dataset(seed, config.dataset)
        write_dataset(dataset, out)
        console.print(
            f"[green]✓ Wrote {len(dataset.benchmarks)} benchmarks "
            f"({len(dataset.train)} train / {len(dataset.test)} test) to {out}[/green]"
        )
    except Exception as e:
        console.print(f"[red]Error generating dataset: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.option("--bench", "-b", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset file")
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", help="Benchmarks to tune")
@click.option("--method", "-m", "methods", multiple=True, required=True, help=f"One of: {', '.join(KNOWN_METHODS)}")
@click.option("--budget", type=float, default=None, help="Per-benchmark wall-clock budget in seconds")
@click.option("--backend", type=BACKEND_CHOICE, default=None, help="Evaluation backend")
@click.option("--ckpt", type=click.Path(dir_okay=False), default=None, help="Policy checkpoint for --method policy")
@click.option("--limit", type=int, default=None, help="Only the first N benchmarks of the split")
@click.option("--workers", type=int, default=None, help="Worker threads (cost model only)")
@click.option("--trace", is_flag=True, help="Also write per-step trace CSVs")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Results directory")
@click.pass_context
def tune(ctx, bench, split, methods, budget, backend, ckpt, limit, workers, trace, out):
    """Tune benchmarks with search methods, the policy or the untiled baseline."""
    try:
        config = _load_config(ctx, backend)
        benchmarks = read_dataset(bench).split(split)[:limit]
        policy = load_checkpoint(ckpt) if ckpt else None
        if POLICY in methods and policy is None:
            raise click.UsageError("--method policy needs --ckpt")
        manager = TuningManager(config, policy=policy)
        console.print(f"[blue]Tuning {len(benchmarks)} benchmarks with {', '.join(methods)}...[/blue]")
        records = manager.tune(benchmarks, list(methods), out, budget_s=budget, trace=trace, workers=workers)
        _print_records(records, f"Tuning results ({manager.kind.value})")
        console.print(f"[green]✓ Wrote {len(records)} results to {out}[/green]")
    except Exception as e:
        console.print(f"[red]Error tuning: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.option("--bench", "-b", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset file")
@click.option("--cfg", "cfg_path", type=click.Path(exists=True, dir_okay=False), help="key = value training overrides")
@click.option("--iterations", type=int, default=None, help="Override the number of iterations")
@click.option("--limit", type=int, default=None, help="Only the first N benchmarks of the split")
@click.option("--backend", type=BACKEND_CHOICE, default=None, help="Evaluation backend")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Checkpoint directory")
@click.pass_context
def train(ctx, bench, cfg_path, iterations, limit, backend, out):
    """Train a Q-network policy on the training split."""
    try:
        config = _load_config(ctx, backend)
        values = config.train.model_dump()
        if cfg_path:
            values.update(_read_overrides(cfg_path))
        if iterations is not None:
            values["iterations"] = iterations
        train_cfg = TrainConfig(**values)
        benchmarks = read_dataset(bench).split(train_cfg.split)[:limit]
        manager = BackendManager(config)
        console.print(f"[blue]Training on {len(benchmarks)} benchmarks for {train_cfg.iterations} iterations...[/blue]")
        result = train_policy(benchmarks, train_cfg, manager, out, config.search.histogram_weighting)
        if result.metrics:
            last = result.metrics[-1]
            console.print(
                f"Final reward {last.episode_reward_mean:.4f}, best {result.best_reward:.4f}, "
                f"{result.updates} updates{' (stopped early)' if result.stopped_early else ''}"
            )
        console.print(f"[green]✓ Checkpoint saved to {result.checkpoint_path}[/green]")
    except Exception as e:
        console.print(f"[red]Error training: {e}[/red]")
        sys.exit(1)


@cli.command(name="eval")
@click.option("--ckpt", required=True, type=click.Path(exists=True, dir_okay=False), help="Policy checkpoint")
@click.option("--bench", "-b", required=True, type=click.Path(exists=True, dir_okay=False), help="Dataset file")
@click.option("--split", type=click.Choice(["train", "test", "all"]), default="test", help="Benchmarks to evaluate")
@click.option("--limit", type=int, default=None, help="Only the first N benchmarks of the split")
@click.option("--backend", type=BACKEND_CHOICE, default=None, help="Evaluation backend")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Results directory")
@click.pass_context
def evaluate(ctx, ckpt, bench, split, limit, backend, out):
    """Roll out a trained policy on every benchmark of a split."""
    try:
        config = _load_config(ctx, backend)
        benchmarks = read_dataset(bench).split(split)[:limit]
        manager = TuningManager(config, policy=load_checkpoint(ckpt))
        records = manager.tune(benchmarks, [POLICY], out)
        _print_records(records, "Policy results")
        console.print(f"[green]✓ Wrote {len(records)} results to {out}[/green]")
    except Exception as e:
        console.print(f"[red]Error evaluating policy: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.option("--dir", "results_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Results directory")
@click.option("--baseline", default=None, help="Method that speedups are relative to (default: original if present)")
@click.option("--out", "-o", type=click.Path(file_okay=False), default=None, help="Report directory (default: --dir)")
def report(results_dir, baseline, out):
    """Performance profiles and speedups over a results directory."""
    try:
        manager = ReportManager(results_dir)
        run = manager.run(baseline, out)

        table = Table(title="Performance profile (fraction within tau of best)")
        table.add_column("Method", style="cyan")
        table.add_column("tau=1", justify="right")
        table.add_column("Mean normalized", justify="right")
        for method in run.methods:
            at_one = run.profiles[method][0][1]
            mean = sum(run.normalized[b][method] for b in run.benchmarks) / len(run.benchmarks)
            table.add_row(method, f"{at_one:.3f}", f"{mean:.3f}")
        console.print(table)

        if run.baseline is not None:
            console.print(f"\n[bold]Speedup over {run.baseline}[/bold]")
            for method, summary in run.speedup_summary.items():
                console.print(
                    f"  {method}: mean {summary['mean']:.2f}x, median {summary['median']:.2f}x, "
                    f"faster on {summary['fraction_faster']:.0%}"
                )
        console.print(f"[green]✓ Report written to {out or results_dir}[/green]")
    except Exception as e:
        console.print(f"[red]Error building report: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.argument("spec")
@click.option("--actions", "-a", default="", help="Comma-separated actions to apply, e.g. split_4,down,swap_up")
@click.option("--backend", type=BACKEND_CHOICE, default=None, help="Evaluation backend")
@click.pass_context
def show(ctx, spec: str, actions: str, backend: Optional[str]):
    """Print a benchmark's loop nest, optionally after some actions."""
    try:
        config = _load_config(ctx, backend)
        ir = lower(parse_spec(spec))
        for label in filter(None, (a.strip() for a in actions.split(","))):
            outcome = apply(ir, Action.from_label(label))
            if not outcome.applied:
                console.print(f"[yellow]{label} is not legal here; skipped[/yellow]")
            ir = outcome.next
        strides = list(loop_strides(ir))
        console.print(f"[bold]{ir.spec.to_dsl()}[/bold]")
        for line in describe(ir, strides):
            console.print(line, markup=False)
        result = BackendManager(config).evaluate(ir)
        console.print(f"\n{result.gflops:.4f} GFLOPS, {result.runtime_ns} ns ({result.backend.value})")
    except Exception as e:
        console.print(f"[red]Error showing schedule: {e}[/red]")
        sys.exit(1)


@cli.command()
@click.option("--backend", type=BACKEND_CHOICE, default=None, help="Evaluation backend")
@click.pass_context
def peak(ctx, backend: Optional[str]):
    """Measure the peak GFLOPS used to normalise rewards."""
    try:
        config = _load_config(ctx, backend)
        estimate = make_backend(config.backend.backend, config).measure_peak()
        console.print(f"[green]{estimate.gflops_peak:.3f} GFLOPS[/green] ({estimate.backend.value}: {estimate.method})")
    except Exception as e:
        console.print(f"[red]Error measuring peak: {e}[/red]")
        sys.exit(1)


def main():
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
