"""
Runners behind the solve, train and risk commands.

Each runner writes its CSV artifacts to an output directory, prints a
summary and returns a results dict.
"""

import logging
from dataclasses import asdict
from pathlib import Path
from typing import Optional

from rich.console import Console
from rich.table import Table

from catlab.config import ExperimentConfig
from catlab.errors import DimensionError, NotInvertibleError
from catlab.model import load_params, save_params
from catlab.records import write_blocks, write_dicts
from catlab.risk import mc_clean_risk, mc_robust_risk
from catlab.solver import (
    InfeasibleFactorization,
    clean_risk_exact,
    factor_optimal_params,
    optimal_predictor_matrix,
    robust_bound,
    surrogate_minimum,
)
from catlab.trainer import check_stationarity, init_params, train_surrogate

console = Console()
logger = logging.getLogger(__name__)


def _summary_table(title: str) -> Table:
    table = Table(title=title, show_header=True)
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", justify="right", style="green")
    return table


def _report_files(files: list) -> None:
    for path in files:
        console.print(f"[green]✓[/green] {path}")


def run_solve(exp: ExperimentConfig, out_dir: Path, deterministic: bool = False) -> dict:
    """Closed-form optimum, its factorization and the robust bound."""
    out_dir = Path(out_dir)
    predictor = optimal_predictor_matrix(exp.we, exp.lam, exp.n, exp.eps)
    files = [write_blocks(out_dir / "predictor.csv", [("b", predictor.b)], deterministic)]
    results = {"predictor": predictor, "params": None, "bound": None, "files": files}

    table = _summary_table("Closed-form optimum")
    table.add_row("clean risk", f"{clean_risk_exact(predictor, exp.lam, exp.n):.10g}")
    table.add_row("surrogate minimum", f"{surrogate_minimum(exp.we, exp.lam, exp.n, exp.eps):.10g}")

    factor = factor_optimal_params(exp.we, exp.lam, exp.n, exp.eps)
    if isinstance(factor, InfeasibleFactorization):
        table.add_row("factorization", "[yellow]infeasible[/yellow]")
        console.print(
            f"[yellow]No attention block realizes B:[/yellow] {factor.reason} "
            f"(residual {factor.residual:.3g})"
        )
    else:
        table.add_row("factorization", "exact")
        results["params"] = factor
        files.append(save_params(factor, out_dir / "optimal_params.csv", deterministic))

    if exp.bound_enabled:
        report = robust_bound(exp.we, exp.lam, exp.n, exp.eps, exp.m, exp.rho)
        row = {**report.as_row(), "eps": exp.eps, "rho": exp.rho, "m": exp.m, "n": exp.n}
        files.append(write_dicts(out_dir / "bound.csv", [row], deterministic))
        table.add_row("robust bound", f"{report.bound:.10g}")
        results["bound"] = report

    console.print(table)
    _report_files(files)
    return results


def run_train(exp: ExperimentConfig, out_dir: Path, deterministic: bool = False) -> dict:
    """Gradient flow on the surrogate from the structured initialization."""
    out_dir = Path(out_dir)
    init = init_params(exp.d, exp.d0, exp.init, exp.lam)

    with console.status(f"[blue]Training for up to {exp.train.steps} steps...[/blue]"):
        result = train_surrogate(init, exp.lam, exp.n, exp.train)

    files = [
        write_dicts(out_dir / "trajectory.csv", [asdict(r) for r in result.rows], deterministic),
        save_params(result.params, out_dir / "params.csv", deterministic),
    ]

    table = _summary_table("Training")
    table.add_row("steps", str(result.steps_taken))
    table.add_row("converged", "yes" if result.converged else "no")
    table.add_row("stopped by", result.stop_reason)
    table.add_row("step halvings", str(result.halvings))
    table.add_row("final loss", f"{result.final_loss:.10g}")
    try:
        table.add_row("surrogate minimum", f"{surrogate_minimum(result.params.we, exp.lam, exp.n, exp.eps):.10g}")
        table.add_row("stationarity", f"{check_stationarity(result.params, exp.lam, exp.n, exp.eps):.3g}")
    except NotInvertibleError as e:
        logger.debug("no closed-form reference: %s", e)
        table.add_row("surrogate minimum", "[dim]undefined[/dim]")
    console.print(table)
    _report_files(files)

    return {"result": result, "files": files}


def run_risk(
    exp: ExperimentConfig,
    out_dir: Path,
    deterministic: bool = False,
    params_path: Optional[Path] = None,
) -> dict:
    """Monte Carlo clean and robust risk of saved parameters or of the optimal predictor."""
    if params_path is not None:
        predictor = load_params(params_path)
        if predictor.d0 != exp.d0:
            raise DimensionError(f"{params_path} has d0={predictor.d0}, experiment has d0={exp.d0}")
        source = str(params_path)
    else:
        predictor = optimal_predictor_matrix(exp.we, exp.lam, exp.n, exp.eps)
        source = "optimal predictor"

    with console.status(f"[blue]Estimating risk over {exp.mc.num_tasks} tasks...[/blue]"):
        clean = mc_clean_risk(predictor, exp.lam, exp.n, exp.mc)
        robust = mc_robust_risk(predictor, exp.lam, exp.n, exp.m, exp.rho, exp.mc, exp.risk_attack())

    path = write_dicts(Path(out_dir) / "risk.csv", [clean.as_row(), robust.as_row()], deterministic)

    table = Table(title=f"Risk of {source}", show_header=True)
    table.add_column("Kind", style="cyan")
    table.add_column("Value", justify="right", style="green")
    table.add_column("Std. error", justify="right")
    for estimate in (clean, robust):
        table.add_row(estimate.kind, f"{estimate.value:.6g}", f"{estimate.stderr:.2g}")
    console.print(table)
    _report_files([path])

    return {"clean": clean, "robust": robust, "files": [path]}
