"""
Parameter sweeps.

Vary one experiment parameter over a list of values and record, per value,
the robust bound, the Monte Carlo clean and robust risk of the optimal
predictor and the singular values of the embedding that produced it.
"""

import logging
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, Progress, TextColumn, TimeRemainingColumn
from rich.table import Table

from catlab.config import ExperimentConfig
from catlab.errors import ConfigError
from catlab.mathcore import sv_stats
from catlab.records import write_dicts
from catlab.risk import RiskEstimate, mc_clean_risk, mc_robust_risk, mc_robust_risk_sweep
from catlab.solver import BoundReport, optimal_predictor_matrix, robust_bound
from catlab.trainer import init_params, train_surrogate

console = Console()
logger = logging.getLogger(__name__)

SWEEP_PARAMS = ("eps", "rho", "m", "n", "beta", "we_scale")
BOUND_FIELDS = tuple(f.name for f in fields(BoundReport))


def parse_values(text: str) -> list[float]:
    """Parse a comma-separated list of numbers."""
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise ConfigError(f"sweep values must be numbers: {text!r}") from e
    if not values:
        raise ConfigError("sweep needs at least one value")
    return values


@dataclass(frozen=True)
class SweepSpec:
    """One parameter, its values and the experiment they override."""
    param: str
    values: tuple
    base: ExperimentConfig

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ConfigError(f"unknown sweep parameter {self.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
        values = tuple(float(v) for v in self.values)
        if not values:
            raise ConfigError("sweep needs at least one value")
        if any(not np.isfinite(v) or v < 0 for v in values):
            raise ConfigError(f"sweep values must be finite and nonnegative, got {list(values)}")
        if self.param in ("m", "n"):
            if any(v != int(v) for v in values):
                raise ConfigError(f"{self.param} takes integer values, got {list(values)}")
            values = tuple(int(v) for v in values)
        object.__setattr__(self, "values", values)

    def point(self, value) -> ExperimentConfig:
        """The base experiment with ``param`` set to ``value``."""
        base = self.base
        if self.param == "eps":
            return replace(
                base,
                eps=value,
                attack=base.attack.with_radius(value),
                train=replace(base.train, eps=value),
            )
        if self.param == "rho":
            return replace(base, rho=value)
        if self.param == "m":
            if value > base.n:
                raise ConfigError(f"m={value} exceeds context length n={base.n}")
            return replace(base, m=value)
        if self.param == "n":
            if value < 1 or base.m > value:
                raise ConfigError(f"n={value} must be >= 1 and >= m={base.m}")
            return replace(base, n=value)
        if self.param == "beta":
            return replace(base, train=replace(base.train, beta=value))
        we = value * np.eye(base.d, base.d0)
        return replace(base, we=we, init=replace(base.init, we_init="scaled", we_scale=value))


def embedding_for(exp: ExperimentConfig) -> np.ndarray:
    """W^E of the experiment, trained on the surrogate first when train_we is on."""
    if not exp.train.train_we:
        return exp.we
    init = init_params(exp.d, exp.d0, replace(exp.init, we_init=exp.we), exp.lam)
    result = train_surrogate(init, exp.lam, exp.n, exp.train)
    logger.debug("trained W^E in %d steps, final loss %.6g", result.steps_taken, result.final_loss)
    return result.params.we


def sweep_row(exp: ExperimentConfig, value, we=None, robust: Optional[RiskEstimate] = None) -> dict:
    """One CSV row; ``we`` and ``robust`` reuse work already done for this point."""
    we = embedding_for(exp) if we is None else we
    predictor = optimal_predictor_matrix(we, exp.lam, exp.n, exp.eps)

    row = {"value": value}
    if exp.bound_enabled:
        row.update(robust_bound(we, exp.lam, exp.n, exp.eps, exp.m, exp.rho).as_row())
    else:
        row.update({name: None for name in BOUND_FIELDS})

    clean = mc_clean_risk(predictor, exp.lam, exp.n, exp.mc)
    if robust is None:
        robust = mc_robust_risk(predictor, exp.lam, exp.n, exp.m, exp.rho, exp.mc, exp.risk_attack())
    stats = sv_stats(we)
    row.update(
        clean_risk=clean.value,
        clean_stderr=clean.stderr,
        robust_risk=robust.value,
        robust_stderr=robust.stderr,
        sv_min=stats.sigma_min,
        sv_max=stats.sigma_max,
        sv_mean=stats.mean,
        sv_var=stats.variance,
    )
    return row


def warm_robust_risks(spec: SweepSpec, we: np.ndarray) -> list[RiskEstimate]:
    """Robust risk for every radius of a rho sweep, warm-started in increasing rho."""
    base = spec.base
    predictor = optimal_predictor_matrix(we, base.lam, base.n, base.eps)
    return mc_robust_risk_sweep(
        predictor, base.lam, base.n, base.m, spec.values, base.mc, base.risk_steps, base.risk_step_ratio
    )


def run_sweep(spec: SweepSpec, out_dir: Path, deterministic: bool = False) -> dict:
    """Evaluate every sweep point and write ``sweep_<param>.csv``."""
    console.print(f"\n[blue]Sweeping {spec.param} over {len(spec.values)} values[/blue]\n")
    rows = []
    # the embedding does not depend on rho
    we = robust = None
    if spec.param == "rho":
        we = embedding_for(spec.base)
        robust = warm_robust_risks(spec, we)

    with Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
        TimeRemainingColumn(),
        console=console,
    ) as progress:
        task = progress.add_task(f"{spec.param}...", total=len(spec.values))
        for i, value in enumerate(spec.values):
            progress.update(task, description=f"{spec.param}={value}")
            rows.append(sweep_row(spec.point(value), value, we, robust[i] if robust else None))
            progress.advance(task)

    path = write_dicts(Path(out_dir) / f"sweep_{spec.param}.csv", rows, deterministic)

    table = Table(title=f"Sweep over {spec.param}", show_header=True)
    table.add_column(spec.param, style="cyan", justify="right")
    table.add_column("Bound", justify="right")
    table.add_column("Clean risk", justify="right", style="green")
    table.add_column("Robust risk", justify="right", style="green")
    table.add_column("SV var", justify="right")
    for row in rows:
        bound = "-" if row["bound"] is None else f"{row['bound']:.4g}"
        table.add_row(
            str(row["value"]),
            bound,
            f"{row['clean_risk']:.4g}",
            f"{row['robust_risk']:.4g}",
            f"{row['sv_var']:.3g}",
        )
    console.print(table)
    console.print(f"[green]✓[/green] {path}")

    return {"rows": rows, "path": path}
