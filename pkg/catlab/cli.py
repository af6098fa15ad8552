"""
catlab - Continuous Adversarial Training Laboratory

Main entry point for the command-line interface.
"""

import logging
from pathlib import Path
from typing import Callable

import click
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel

from catlab import __version__
from catlab.config import Config, build_experiment
from catlab.errors import CatlabError, ConfigError
from catlab.runs import run_risk, run_solve, run_train
from catlab.sweep import SWEEP_PARAMS, SweepSpec, parse_values, run_sweep
from catlab.verify import check_names, run_verify

console = Console()
err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2


def setup_logging(verbose: int) -> None:
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG)
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )


def _run(ctx: click.Context, fn: Callable[..., dict], *args, **kwargs) -> dict:
    """Save the effective config, call a runner and map errors to exit codes."""
    out_dir = ctx.obj["out"]
    try:
        ctx.obj["config"].save(out_dir / "effective_config.yaml")
        return fn(ctx.obj["experiment"], out_dir, ctx.obj["deterministic"], *args, **kwargs)
    except ConfigError as e:
        console.print(f"[red]Error:[/red] {e}")
        ctx.exit(EXIT_USAGE)
    except CatlabError as e:
        console.print(f"[red]Error:[/red] {e}")
        ctx.exit(EXIT_FAILED)
    except (OSError, ValueError) as e:
        console.print(f"[red]Error:[/red] {e}")
        ctx.exit(EXIT_USAGE)


@click.group()
@click.version_option(version=__version__, prog_name="catlab")
@click.option("--config", "-c", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="YAML config merged over the defaults.")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Override mc.seed.")
@click.option("--out", "-o", type=click.Path(file_okay=False, path_type=Path), default=Path("results"),
              show_default=True, help="Output directory.")
@click.option("--threads", type=click.IntRange(min=1), default=1, envvar="CATLAB_THREADS",
              show_default=True, help="Monte Carlo worker threads; results do not depend on it.")
@click.option("--deterministic", is_flag=True, help="Omit the timestamp line from CSV files.")
@click.option("--verbose", "-v", count=True, help="Log more (-v info, -vv debug).")
@click.pass_context
def cli(ctx, config_path, seed, out, threads, deterministic, verbose):
    """catlab - Continuous Adversarial Training Laboratory

    Embedding-space adversarial training of linear self-attention, its
    closed-form optimum, robust risk and generalization bound.
    """
    setup_logging(verbose)
    ctx.ensure_object(dict)
    try:
        config = Config(config_path)
        if seed is not None:
            config.set("mc.seed", seed)
        experiment = build_experiment(config, workers=threads)
    except ConfigError as e:
        console.print(f"[red]Error:[/red] {e}")
        ctx.exit(EXIT_USAGE)

    ctx.obj["config"] = config
    ctx.obj["experiment"] = experiment
    ctx.obj["out"] = out
    ctx.obj["deterministic"] = deterministic


@cli.command()
@click.option("--check", "checks", multiple=True, type=click.Choice(check_names()),
              help="Run only this check (repeatable).")
@click.pass_context
def verify(ctx, checks):
    """Run the verification suite and write verify_report.csv."""
    console.print(Panel.fit(
        f"[bold blue]catlab[/bold blue] v{__version__}",
        title="Verification suite",
    ))
    results = _run(ctx, run_verify, names=list(checks) or None)
    ctx.exit(EXIT_FAILED if results["failed"] else EXIT_OK)


@cli.command()
@click.pass_context
def solve(ctx):
    """Closed-form optimal predictor, factorization and robust bound."""
    _run(ctx, run_solve)


@cli.command()
@click.pass_context
def train(ctx):
    """Train the surrogate objective by gradient flow."""
    _run(ctx, run_train)


@cli.command()
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Parameters saved by train or solve; defaults to the optimal predictor.")
@click.pass_context
def risk(ctx, params_path):
    """Monte Carlo clean and robust risk."""
    _run(ctx, run_risk, params_path=params_path)


@cli.command()
@click.option("--param", type=click.Choice(SWEEP_PARAMS), required=True, help="Parameter to vary.")
@click.option("--values", "values_text", required=True, help="Comma-separated values, e.g. 0,0.1,0.2")
@click.pass_context
def sweep(ctx, param, values_text):
    """Sweep one parameter and write sweep_<param>.csv."""
    def runner(exp, out_dir, deterministic):
        spec = SweepSpec(param=param, values=tuple(parse_values(values_text)), base=exp)
        return run_sweep(spec, out_dir, deterministic)

    _run(ctx, runner)


if __name__ == "__main__":
    cli()
