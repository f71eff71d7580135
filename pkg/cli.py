#!/usr/bin/env python3
"""
OpenPSPS CLI - Day-ahead shutoff and peak-pricing scheduling

Fit a Markov weather model from daily CSVs, solve the scheduling policies and
evaluate them against baselines:
- synth: write a seeded synthetic weather CSV
- fit: discretize, estimate transitions (and demand) from training seasons
- solve: build the s1 / s2 / s3 / cpp policy table
- advise: one stateless decision for tomorrow
- simulate: Monte Carlo comparison over simulated seasons
- report: per-season comparison on held-out test seasons
- check: effective settings

Usage:
    openpsps synth psps -o data/summer.csv
    openpsps fit data/summer.csv --train-years 2011-2018 --test-years 2019-2020
    openpsps solve --scenario s1 --budget 10
    openpsps advise artifacts/table_s1.npz --day 40 --budget-left 7 --obs temp=36 --obs rh=12 ...
    openpsps simulate artifacts/table_s1.npz artifacts/table_s2.npz --years 100
"""

import functools
import importlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional

import click
import numpy as np
import pandas as pd
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from openpsps import __version__
from openpsps.baselines_sim import (
    AdjustedShutoffPolicy,
    BudgetedShutoffPolicy,
    CostThresholdPolicy,
    CppCostModel,
    CppThresholdPolicy,
    ExperimentResult,
    MyopicPolicy,
    NeverPolicy,
    Policy,
    PspsCostModel,
    evaluate_seasons,
    historical_policy,
    monte_carlo,
    summary_json,
    write_trace_csv,
)
from openpsps.cpp_sched import (
    PolicyTableCpp,
    build_cpp,
    check_thresholds,
    cpp_threshold,
    decide_cpp,
    threshold_cpp,
)
from openpsps.errors import ConfigError, DataError, InfeasibleError, NotErgodicError, PSPSError
from openpsps.ingest import (
    FrameSchema,
    demand_by_season,
    fit_bins,
    fit_demand,
    load_csv,
    select_bin_count,
    split_years,
    state_paths,
)
from openpsps.markov_model import (
    TransitionModel,
    day_type_labels,
    discretize,
    empirical_frequencies,
    estimate_transitions,
    from_counts,
    stationary,
)
from openpsps.models import CostSchedule, CppConfig, ModelArtifact, RiskRule, RunConfig
from openpsps.risk_cost import indicator_vector
from openpsps.scenario1 import PolicyTableS1, build_s1, decide_s1, threshold_layer, threshold_s1
from openpsps.scenario2 import PolicyTableS2, build_s2, decide_s2, threshold_s2
from openpsps.scenario2 import threshold_layer as adjusted_threshold_layer
from openpsps.scenario3 import ValueTensor, extract_policy, solve_s3
from openpsps.synthetic import quebec_like, sacramento_like, write_csv
from openpsps.tables import AnyTable, load_table, read_header, save_table
from shared import constants
from shared.artifact_store import artifact_path, load_document, save_document

console = Console()
log_console = Console(stderr=True)
logger = logging.getLogger("openpsps.cli")

EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_INFEASIBLE = 4


# =============================================================================
# Plumbing
# =============================================================================

def _exit_code(error: Exception) -> int:
    if isinstance(error, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(error, (DataError, NotErgodicError, FileNotFoundError)):
        return EXIT_DATA
    # DegenerateParameterError and ScaleGuardError are ValueErrors too
    if isinstance(error, (ValidationError, ValueError)):
        return EXIT_USAGE
    return EXIT_FAILURE


def handle_errors(func):
    """Print library errors in red and exit with their mapped code."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (click.ClickException, click.exceptions.Exit, click.Abort):
            raise
        except (PSPSError, ValidationError, ValueError, FileNotFoundError) as e:
            logger.debug("command failed", exc_info=True)
            console.print(f"\n[red]Error:[/red] {escape(str(e))}")
            sys.exit(_exit_code(e))
    return wrapper


def _parse_years(text: str) -> List[int]:
    """'2011-2018' or '2019,2020' (or a mix) to a sorted list of years."""
    years = set()
    for part in filter(None, (p.strip() for p in text.split(","))):
        try:
            if "-" in part:
                first, last = (int(v) for v in part.split("-", 1))
                years.update(range(first, last + 1))
            else:
                years.add(int(part))
        except ValueError:
            raise click.BadParameter(f"cannot read years from {part!r}")
    return sorted(years)


def _run_config(config_path: Optional[str], **overrides) -> RunConfig:
    """RunConfig from an optional JSON file, with explicit options taking precedence."""
    data: Dict = {}
    if config_path:
        path = Path(config_path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        data = json.loads(path.read_text(encoding="utf-8"))
    data.update({k: v for k, v in overrides.items() if v is not None})
    if "scenario" not in data:
        raise click.UsageError("a scenario is required (--scenario or the config file)")
    return RunConfig.model_validate(data)


def _load_model(path) -> "tuple[ModelArtifact, TransitionModel]":
    artifact = load_document(ModelArtifact, path)
    return artifact, from_counts(artifact.dense_counts(), artifact.smoothing)


def _risk_indicator(artifact: ModelArtifact) -> np.ndarray:
    return indicator_vector(artifact.state_space, artifact.risk_rule or RiskRule.default_psps())


MODEL_HELP = "Fitted model.json (default: the one used to solve)"


def _solved_with(header) -> str:
    return header.params.get("model", f"{constants.ARTIFACT_DIR}/model.json")


def _spinner() -> Progress:
    return Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    )


def _slug(name: str) -> str:
    return name.lower().replace(" ", "-")


def _fmt(value: float) -> str:
    return "-" if not np.isfinite(value) else f"{value:,.4g}"


# =============================================================================
# Commands
# =============================================================================

@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", "-v", is_flag=True, help="Debug logging")
def cli(verbose: bool):
    """
    OpenPSPS - Day-ahead shutoff and peak-pricing scheduling

    Threshold policies for public safety power shutoffs under a Markov
    weather model, and for critical peak pricing with an event budget.
    """
    logging.basicConfig(
        level=logging.DEBUG if verbose else constants.LOG_LEVEL,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=log_console, show_path=False)],
        force=True,
    )


@cli.command()
@click.argument("kind", type=click.Choice(["psps", "cpp"]))
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False), help="CSV to write")
@click.option("--years", default="2011-2020", show_default=True, help="Years to cover")
@click.option("--seed", type=int, default=constants.DEFAULT_SEED, show_default=True)
@handle_errors
def synth(kind: str, output: str, years: str, seed: int):
    """
    Write a seeded synthetic daily CSV.

    psps: Sacramento-like summers with persistent fire-weather spells.
    cpp: Quebec-like winters with temperature-driven peak demand.

    Example:
        openpsps synth psps -o data/summer.csv
    """
    generate = sacramento_like if kind == "psps" else quebec_like
    path = write_csv(generate(_parse_years(years), seed=seed), output)
    console.print(f"[dim]Saved to:[/dim] [cyan]{path}[/cyan]")


@cli.command()
@click.argument("data", type=click.Path(dir_okay=False))
@click.option("--kind", type=click.Choice(["psps", "cpp"]), default="psps", show_default=True)
@click.option("--train-years", required=True, help="Training seasons, e.g. 2011-2018")
@click.option("--test-years", default="", help="Held-out seasons, e.g. 2019,2020")
@click.option(
    "--bins", type=int, default=None, help="Bins per phenomenon (default 8; cpp 12 temp / 7 precip)"
)
@click.option("--cv-bins", default=None, help="Candidate bin counts to cross-validate, e.g. 3,5")
@click.option("--folds", type=int, default=10, show_default=True, help="Cross-validation folds")
@click.option("--loo", is_flag=True, help="Leave-one-out cross-validation instead of k-fold")
@click.option(
    "--day-types",
    type=click.Choice(["auto", "on", "off"]),
    default="auto",
    show_default=True,
    help="Weekday/weekend factor; auto means on for cpp",
)
@click.option(
    "--smoothing", type=float, default=0.0, show_default=True, help="Pseudo-count per transition"
)
@click.option("--carry-forward", is_flag=True, help="Fill missing season days from the day before")
@click.option("--seed", type=int, default=constants.DEFAULT_SEED, show_default=True)
@click.option("--output-dir", "-o", default=constants.ARTIFACT_DIR, show_default=True)
@handle_errors
def fit(
    data: str,
    kind: str,
    train_years: str,
    test_years: str,
    bins: Optional[int],
    cv_bins: Optional[str],
    folds: int,
    loo: bool,
    day_types: str,
    smoothing: float,
    carry_forward: bool,
    seed: int,
    output_dir: str,
):
    """
    Fit the state space, transition model and (cpp) demand model.

    Writes <output-dir>/model.json; identical inputs give identical bytes.

    Example:
        openpsps fit data/summer.csv --train-years 2011-2018 --test-years 2019-2020
    """
    schema = FrameSchema.psps() if kind == "psps" else FrameSchema.cpp()
    season = constants.PSPS_SEASON if kind == "psps" else constants.CPP_SEASON
    frame = load_csv(data, schema, season=season, carry_forward=carry_forward)
    train, test = split_years(frame, _parse_years(train_years), _parse_years(test_years))

    use_day_types = day_types == "on" or (day_types == "auto" and kind == "cpp")
    labels = ("weekday", "weekend") if use_day_types else ()
    if cv_bins:
        candidates = [int(v) for v in cv_bins.split(",")]
        best, scores = select_bin_count(train, schema, candidates, folds, loo, seed, labels)
        counts = {p.name: best for p in schema.phenomena}
        for count, score in sorted(scores.items()):
            logger.info(f"{count} bins: held-out MSE {score:,.1f}")
    elif kind == "psps":
        counts = {p.name: bins or constants.PSPS_BINS for p in schema.phenomena}
    else:
        counts = {p.name: bins or constants.CPP_BINS[p.name] for p in schema.phenomena}

    space = fit_bins(train, counts, schema, labels)
    train_paths = state_paths(train, space)
    test_paths = state_paths(test, space) if len(test) else {}
    model = estimate_transitions(list(train_paths.values()), space.cardinality, smoothing)
    nonzero = np.argwhere(model.counts > 0)

    demand, test_demand = None, {}
    if kind == "cpp":
        demand = fit_demand(train[train["in_window"]], space)
        if len(test):
            test_demand = {str(y): v.tolist() for y, v in demand_by_season(test).items()}

    artifact = ModelArtifact(
        kind=kind,
        state_space=space,
        smoothing=smoothing,
        transition_counts=[[int(i), int(j), int(model.counts[i, j])] for i, j in nonzero],
        train_paths={str(y): p.tolist() for y, p in train_paths.items()},
        test_paths={str(y): p.tolist() for y, p in test_paths.items()},
        risk_rule=RiskRule.default_psps() if kind == "psps" else None,
        demand=demand,
        test_demand=test_demand,
    )
    path = save_document(artifact, output_dir, "model")

    sizes = " x ".join(str(s) for s in space.sizes)
    lines = [
        f"[bold]Kind:[/bold] {kind}",
        f"[bold]Bins:[/bold] {sizes} = {space.cardinality} states",
        f"[bold]Train seasons:[/bold] {', '.join(artifact.train_paths) or '-'}",
        f"[bold]Test seasons:[/bold] {', '.join(artifact.test_paths) or '-'}",
        f"[bold]Observed transitions:[/bold] {int(model.counts.sum())}",
    ]
    if demand is not None:
        lines.append(f"[bold]Demand RMSE:[/bold] {demand.rmse:,.1f} MW")
    console.print(Panel(
        "\n".join(lines),
        title="[bold green]Fitted model[/bold green]",
        border_style="green",
    ))
    console.print(f"[dim]Saved to:[/dim] [cyan]{path}[/cyan]")


def threshold_summary(table: AnyTable) -> pd.DataFrame:
    """
    Smallest and largest finite threshold of each decision day over every
    budget level, previous decision and state. For scenario-3 tensors the
    quantity is the lowest reachable expected operating cost instead.
    """
    rows = []
    for t in range(1, table.T + 1):
        d = table.T + 1 - t
        if isinstance(table, PolicyTableS1):
            values = np.concatenate([
                threshold_layer(table, d, k, u) for k in range(1, table.N + 1) for u in (0, 1)
            ]) if table.N else np.array([])
        elif isinstance(table, PolicyTableS2):
            values = np.concatenate([adjusted_threshold_layer(table, d, u) for u in (0, 1)])
        elif isinstance(table, ValueTensor):
            values = table.b[d].ravel()
        else:
            p = table.T - d
            B, C, _ = table.config.quad.arrays()
            g = table.g[d - 1]
            abar = table.config.params.abar[p]
            values = cpp_threshold(g[1:], g[:-1], abar, B[p], C[p], table.config.params.y).ravel()
        finite = values[np.isfinite(values)]
        rows.append({
            "day": t,
            "min": float(finite.min()) if finite.size else np.nan,
            "max": float(finite.max()) if finite.size else np.nan,
        })
    return pd.DataFrame(rows)


@cli.command()
@click.option(
    "--config", "config_path", type=click.Path(dir_okay=False), default=None, help="RunConfig JSON"
)
@click.option("--scenario", type=click.Choice(["s1", "s2", "s3", "cpp"]), default=None)
@click.option("--horizon", "-T", type=int, default=None, help="Decision days (default 122 / 121)")
@click.option("--budget", "-N", type=int, default=None, help="Event budget (N for s1, M for cpp)")
@click.option("--alpha-bar", type=float, default=None, help="Expected operating-cost cap (s3)")
@click.option("--grid-points", type=int, default=None, help="Threshold grid size (s3)")
@click.option("--costs", "costs_path", default=None, help="CostSchedule JSON (psps)")
@click.option("--cpp", "cpp_path", default=None, help="CppConfig JSON")
@click.option("--model", "model_path", default=None, help="Fitted model.json")
@click.option("--output-dir", "-o", default=None)
@click.option(
    "--start-state", type=int, default=None, help="s3: fail unless this day-1 state is feasible"
)
@handle_errors
def solve(
    config_path: Optional[str],
    scenario: Optional[str],
    horizon: Optional[int],
    budget: Optional[int],
    alpha_bar: Optional[float],
    grid_points: Optional[int],
    costs_path: Optional[str],
    cpp_path: Optional[str],
    model_path: Optional[str],
    output_dir: Optional[str],
    start_state: Optional[int],
):
    """
    Build a policy table and save it as <output-dir>/table_<scenario>.npz.

    Example:
        openpsps solve --scenario s1 --budget 10
        openpsps solve --scenario s3 --alpha-bar 1.2e9 --grid-points 201
    """
    config = _run_config(
        config_path,
        scenario=scenario,
        horizon=horizon,
        budget=budget,
        alpha_bar=alpha_bar,
        grid_points=grid_points,
        costs_path=costs_path,
        cpp_path=cpp_path,
        model_path=model_path,
        output_dir=output_dir,
    )
    artifact, model = _load_model(config.model_path)
    cpp = config.scenario == "cpp"
    kind = "cpp" if cpp else "psps"
    if artifact.kind != kind:
        raise click.UsageError(f"scenario {config.scenario} needs a {kind} model")
    T = config.horizon or (constants.CPP_HORIZON if cpp else constants.PSPS_HORIZON)

    with _spinner() as progress:
        task = progress.add_task(f"[cyan]Solving {config.scenario} over {T} days...", total=None)
        if cpp:
            if config.cpp_path:
                cpp_config = load_document(CppConfig, config.cpp_path)
            else:
                cpp_config = CppConfig.build(T, M=config.budget)
            check_thresholds(cpp_config)
            if artifact.demand is None:
                raise DataError("the cpp model has no demand regression", path=config.model_path)
            q = artifact.demand.predict_states(artifact.state_space)
            table = build_cpp(T, cpp_config, q, model, M=config.budget)
        else:
            if config.costs_path:
                costs = load_document(CostSchedule, config.costs_path)
            else:
                costs = CostSchedule.build(T)
            f = _risk_indicator(artifact)
            if config.scenario == "s1":
                table = build_s1(T, config.budget, costs, model, f)
            elif config.scenario == "s2":
                table = build_s2(T, costs, model, f)
            else:
                table = solve_s3(
                    T, config.alpha_bar, costs, model, f, config.grid_points, x1=start_state
                )
        progress.update(task, description="[green]Solved")

    extra = {"model": str(config.model_path)}
    if config.alpha_bar is not None:
        extra["alpha_bar"] = config.alpha_bar
    target = artifact_path(config.output_dir, f"table_{config.scenario}", ".npz")
    path = save_table(table, target, **extra)
    summary = threshold_summary(table)
    summary_path = artifact_path(config.output_dir, f"thresholds_{config.scenario}", ".csv")
    summary.to_csv(summary_path, index=False, lineterminator="\n")

    dims = read_header(path).dims
    console.print(Panel(
        f"[bold]Scenario:[/bold] {config.scenario}\n"
        f"[bold]Table dims:[/bold] {tuple(dims)}\n"
        f"[bold]States:[/bold] {model.n_states}",
        title="[bold green]Policy table[/bold green]",
        border_style="green",
    ))
    label = "Lowest reachable cost" if isinstance(table, ValueTensor) else "Threshold"
    days = Table(title=f"{label} per day (first and last days)")
    days.add_column("Day", justify="right")
    days.add_column("Min", justify="right")
    days.add_column("Max", justify="right")
    shown = summary if len(summary) <= 6 else pd.concat([summary.head(3), summary.tail(3)])
    for row in shown.itertuples():
        days.add_row(str(row.day), _fmt(row.min), _fmt(row.max))
    console.print(days)
    console.print(f"[dim]Saved to:[/dim] [cyan]{path}[/cyan]")


def _observed_state(
    artifact: ModelArtifact,
    state: Optional[int],
    obs: tuple,
    date: Optional[str],
) -> int:
    space = artifact.state_space
    if state is not None:
        if not 0 <= state < space.cardinality:
            raise click.BadParameter(
                f"state must lie in 0..{space.cardinality - 1}", param_hint="--state"
            )
        return state
    readings = {}
    for item in obs:
        name, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"expected name=value, got {item!r}", param_hint="--obs")
        try:
            readings[name.strip()] = float(value)
        except ValueError:
            raise click.BadParameter(f"not a number: {value!r}", param_hint="--obs")
    names = [p.name for p in space.phenomena]
    missing = [n for n in names if n not in readings]
    if missing:
        raise click.BadParameter(f"missing readings for {missing}", param_hint="--obs")
    day_type = None
    if space.day_types:
        if date is None:
            raise click.BadParameter("this model needs the observation date", param_hint="--date")
        day_type = day_type_labels(pd.Series([pd.Timestamp(date)])).iloc[0]
    return discretize(space, [readings[n] for n in names], day_type)


def _check_budget(k: Optional[int], limit: int) -> int:
    if k is None:
        raise click.BadParameter("this scenario needs --budget-left", param_hint="--budget-left")
    if not 0 <= k <= limit:
        raise click.BadParameter(f"must lie in 0..{limit}, got {k}", param_hint="--budget-left")
    return k


@cli.command()
@click.argument("table_path", type=click.Path(dir_okay=False))
@click.option("--model", "model_path", default=None, help=MODEL_HELP)
@click.option("--day", "-t", type=int, required=True, help="Decision day, 1..T")
@click.option(
    "--prev-u", type=click.IntRange(0, 1), default=0, show_default=True, help="Decision for today"
)
@click.option("--budget-left", "-k", type=int, default=None, help="Events left (s1, cpp)")
@click.option("--alpha", type=float, default=None, help="Carried cost threshold (s3, after day 1)")
@click.option("--obs", multiple=True, help="Today's reading as name=value, once per phenomenon")
@click.option("--state", type=int, default=None, help="Joint state index instead of --obs")
@click.option("--date", default=None, help="ISO date of the readings (models with day types)")
@click.option("--json", "as_json", is_flag=True, help="Print only the JSON decision")
@click.option("--output", "-o", default=None, help="Also write the JSON decision here")
@handle_errors
def advise(
    table_path: str,
    model_path: Optional[str],
    day: int,
    prev_u: int,
    budget_left: Optional[int],
    alpha: Optional[float],
    obs: tuple,
    state: Optional[int],
    date: Optional[str],
    as_json: bool,
    output: Optional[str],
):
    """
    Decide whether to call an event for tomorrow.

    Stateless: the caller passes the events left and today's decision.

    Example:
        openpsps advise artifacts/table_s1.npz -t 40 -k 7 --obs temp=36 --obs rh=12 \\
            --obs wind=30 --obs gust=50
    """
    header = read_header(table_path)
    artifact, model = _load_model(model_path or _solved_with(header))
    table = load_table(table_path, model)
    if not 1 <= day <= table.T:
        raise click.BadParameter(f"must lie in 1..{table.T}, got {day}", param_hint="--day")
    x = _observed_state(artifact, state, obs, date)
    d = table.T + 1 - day

    advice = {"scenario": header.scenario, "day": day, "state": x, "prev_u": prev_u}
    if isinstance(table, PolicyTableS1):
        k = _check_budget(budget_left, table.N)
        u = decide_s1(table, d, k, prev_u, x)
        threshold = threshold_s1(table, d, k, prev_u, x)
        metric = float(table.wrp[x])
        reason = "risk at or above threshold" if u else "risk below threshold"
    elif isinstance(table, PolicyTableS2):
        k = None
        u = decide_s2(table, d, prev_u, x)
        threshold = threshold_s2(table, d, prev_u, x)
        metric = float(table.wrp[x])
        reason = "risk at or above threshold" if u else "risk below threshold"
    elif isinstance(table, ValueTensor):
        k = None
        if alpha is None:
            if day > 1:
                raise click.BadParameter(
                    "days after the first need the carried --alpha", param_hint="--alpha"
                )
            alpha = float(header.params["alpha_bar"])
        u, phi = extract_policy(table, day, x, alpha, prev_u)
        threshold = alpha
        metric = float(table.wrp[x])
        if u:
            reason = "shutoff keeps the expected count lowest"
        else:
            reason = "energized within the cost threshold"
        if phi is not None:
            advice["next_alpha"] = {str(i): float(v) for i, v in enumerate(phi) if np.isfinite(v)}
    else:
        k = _check_budget(budget_left, table.M)
        u = decide_cpp(table, d, k, x)
        threshold = threshold_cpp(table, d, k, x)
        metric = float(table.mean_demand[x])
        reason = "expected demand above threshold" if u else "expected demand at or below threshold"
    if k == 0:
        reason = "budget depleted"

    advice.update({"decision": int(u), "threshold": threshold, "metric": metric, "reason": reason})
    if k is not None:
        advice.update({"budget_left": k, "budget_after": k - int(u)})
    text = summary_json(advice)
    if output:
        Path(output).parent.mkdir(parents=True, exist_ok=True)
        Path(output).write_text(text + "\n", encoding="utf-8")
    if as_json:
        click.echo(text)
        return

    color = "red" if u else "green"
    console.print(Panel(
        f"[bold {color}]{'CALL EVENT' if u else 'NO EVENT'}[/bold {color}] for day {day + 1}\n\n"
        f"[bold]State:[/bold] {x}\n"
        f"[bold]Metric:[/bold] {_fmt(metric)}\n"
        f"[bold]Threshold:[/bold] {_fmt(threshold)}\n"
        f"[bold]Reason:[/bold] {reason}",
        title=f"[bold cyan]{header.scenario} advice[/bold cyan]",
        border_style=color,
    ))
    click.echo(text)


class Experiment(NamedTuple):
    artifact: ModelArtifact
    model: TransitionModel
    T: int
    policies: List[Policy]
    cost_model: object
    hindsight_budget: Optional[int]


def _check_same_costs(tables: list, table_paths: tuple) -> None:
    """Shutoff tables replayed together must share their operating costs."""
    reference = np.stack(tables[0].costs.arrays())
    for table, path in zip(tables[1:], table_paths[1:]):
        if not np.allclose(np.stack(table.costs.arrays()), reference, rtol=1e-12, atol=0.0):
            raise ConfigError(
                f"{path} was solved with other operating costs than {table_paths[0]}"
            )


def _experiment(
    table_paths: tuple,
    model_path: Optional[str],
    historical_count: Optional[int],
    mode: str,
) -> Experiment:
    """Load tables and the model, and line up the policies and baselines they imply."""
    headers = [read_header(p) for p in table_paths]
    scenarios = [h.scenario for h in headers]
    if len(set(scenarios)) != len(scenarios):
        raise click.UsageError(f"one table per scenario, got {scenarios}")
    if "cpp" in scenarios and len(scenarios) > 1:
        raise click.UsageError("cpp tables cannot be mixed with shutoff tables")
    artifact, model = _load_model(model_path or _solved_with(headers[0]))
    tables = [load_table(p, model) for p in table_paths]
    horizons = {t.T for t in tables}
    if len(horizons) != 1:
        raise click.UsageError(f"tables disagree on the horizon: {sorted(horizons)}")
    T = horizons.pop()
    train = list(artifact.train_paths.values())

    if scenarios == ["cpp"]:
        table: PolicyTableCpp = tables[0]
        cost_model = CppCostModel(table)
        count = historical_count or table.M
        policies = [
            CppThresholdPolicy(table),
            historical_policy(train, count, table.mean_demand, horizon=T),
        ]
        return Experiment(artifact, model, T, policies, cost_model, table.M)

    _check_same_costs(tables, table_paths)
    cost_model = PspsCostModel(tables[0].costs, model, _risk_indicator(artifact))
    policies: List[Policy] = []
    budget = constants.PSPS_BUDGET
    for header, table in zip(headers, tables):
        if isinstance(table, PolicyTableS1):
            policies.append(BudgetedShutoffPolicy(table))
            budget = table.N
        elif isinstance(table, PolicyTableS2):
            policies.append(AdjustedShutoffPolicy(table))
        else:
            policies.append(CostThresholdPolicy(table, float(header.params["alpha_bar"]), mode))
    policies.append(historical_policy(train, historical_count or budget, cost_model.wrp, horizon=T))
    policies.append(MyopicPolicy(tables[0].costs, cost_model.wrp))
    policies.append(NeverPolicy())
    return Experiment(artifact, model, T, policies, cost_model, None)


def _initial_distribution(experiment: Experiment) -> np.ndarray:
    try:
        return stationary(experiment.model)
    except NotErgodicError as e:
        logger.warning(f"{e}; drawing day-0 states from the training frequencies")
        visited = np.concatenate([np.asarray(p) for p in experiment.artifact.train_paths.values()])
        return empirical_frequencies(visited, experiment.model.n_states)


def _summary_table(title: str, result: ExperimentResult) -> Table:
    table = Table(title=title)
    table.add_column("Policy")
    table.add_column("Events avg (std)", justify="right")
    table.add_column("Expected cost avg (std)", justify="right")
    table.add_column("Realized cost avg (std)", justify="right")
    for name, stats in result.summary().items():
        table.add_row(
            name,
            f"{stats['count_mean']:.2f} ({stats['count_std']:.2f})",
            f"{_fmt(stats['expected_cost_mean'])} ({_fmt(stats['expected_cost_std'])})",
            f"{_fmt(stats['realized_cost_mean'])} ({_fmt(stats['realized_cost_std'])})",
        )
    return table


def _savings(result: ExperimentResult, experiment: Experiment) -> Dict[str, Dict[str, float]]:
    if experiment.hindsight_budget is None:
        return {}
    out = {}
    for policy in experiment.policies:
        values = result.savings(policy.name)
        out[policy.name] = {
            "mean": float(np.nanmean(values)) if np.isfinite(values).any() else float("nan"),
            "values": values.tolist(),
        }
    return out


_EXPERIMENT_OPTIONS = [
    click.argument("tables", nargs=-1, required=True, type=click.Path(dir_okay=False)),
    click.option("--model", "model_path", default=None, help=MODEL_HELP),
    click.option(
        "--historical-count", type=int, default=None, help="Order statistic of the historical rule"
    ),
    click.option(
        "--mode",
        type=click.Choice(["case_split", "argmin"]),
        default="case_split",
        help="s3 branch",
    ),
    click.option("--output-dir", "-o", default=constants.ARTIFACT_DIR, show_default=True),
]


def experiment_options(func):
    for option in reversed(_EXPERIMENT_OPTIONS):
        func = option(func)
    return func


@cli.command()
@experiment_options
@click.option("--years", "n_years", type=int, default=100, show_default=True, help="Seasons")
@click.option("--seed", type=int, default=constants.DEFAULT_SEED, show_default=True)
@click.option("--workers", type=int, default=constants.DEFAULT_WORKERS, show_default=True)
@handle_errors
def simulate(
    tables: tuple,
    model_path: Optional[str],
    historical_count: Optional[int],
    mode: str,
    output_dir: str,
    n_years: int,
    seed: int,
    workers: int,
):
    """
    Compare policies and baselines over simulated seasons.

    Writes <output-dir>/simulation.json and per-day traces of season 0.

    Example:
        openpsps simulate artifacts/table_s1.npz artifacts/table_s2.npz --years 100
    """
    experiment = _experiment(tables, model_path, historical_count, mode)
    with _spinner() as progress:
        task = progress.add_task(f"[cyan]Simulating {n_years} seasons...", total=None)
        result = monte_carlo(
            experiment.model,
            experiment.T,
            experiment.policies,
            experiment.cost_model,
            n_years,
            seed=seed,
            initial=_initial_distribution(experiment),
            workers=workers,
            hindsight_budget=experiment.hindsight_budget,
        )
        progress.update(task, description="[green]Simulation complete")

    out = Path(output_dir)
    for name, runs in result.episodes.items():
        write_trace_csv(runs[0], out / "traces" / f"sim_year0_{_slug(name)}.csv")
    document = {
        "horizon": experiment.T,
        "n_years": n_years,
        "seed": seed,
        "summary": result.summary(),
        "savings_vs_hindsight": _savings(result, experiment),
    }
    path = out / "simulation.json"
    path.write_text(summary_json(document) + "\n", encoding="utf-8")
    console.print(_summary_table(f"{n_years} simulated seasons", result))
    console.print(f"[dim]Saved to:[/dim] [cyan]{path}[/cyan]")


@cli.command()
@experiment_options
@handle_errors
def report(
    tables: tuple,
    model_path: Optional[str],
    historical_count: Optional[int],
    mode: str,
    output_dir: str,
):
    """
    Compare policies and baselines on the held-out test seasons.

    Writes <output-dir>/report.json and per-day traces of every season.

    Example:
        openpsps report artifacts/table_s1.npz artifacts/table_s2.npz
    """
    experiment = _experiment(tables, model_path, historical_count, mode)
    artifact = experiment.artifact
    if not artifact.test_paths:
        raise DataError("the model has no test seasons; fit with --test-years")
    paths = {int(y): np.asarray(p) for y, p in artifact.test_paths.items()}
    observed = None
    if experiment.hindsight_budget is not None:
        observed = {int(y): np.asarray(v) for y, v in artifact.test_demand.items()}
    result = evaluate_seasons(
        paths,
        experiment.policies,
        experiment.cost_model,
        experiment.T,
        observed,
        experiment.hindsight_budget,
    )

    out = Path(output_dir)
    for name, runs in result.episodes.items():
        for year, run in zip(result.years, runs):
            write_trace_csv(run, out / "traces" / f"{year}_{_slug(name)}.csv")
    document = {
        "horizon": experiment.T,
        "seasons": result.per_year(),
        "summary": result.summary(),
        "savings_vs_hindsight": _savings(result, experiment),
    }
    path = out / "report.json"
    path.write_text(summary_json(document) + "\n", encoding="utf-8")

    table = Table(title="Test seasons")
    table.add_column("Season")
    table.add_column("Policy")
    table.add_column("Events", justify="right")
    table.add_column("Expected cost", justify="right")
    table.add_column("Realized cost", justify="right")
    for season, rows in result.per_year().items():
        for name, row in rows.items():
            table.add_row(
                season,
                name,
                str(row["count"]),
                _fmt(row["expected_cost"]),
                _fmt(row["realized_cost"]),
            )
    console.print(table)
    console.print(f"[dim]Saved to:[/dim] [cyan]{path}[/cyan]")


_SETTINGS = [
    ("OPENPSPS_SEED", "DEFAULT_SEED"),
    ("OPENPSPS_WORKERS", "DEFAULT_WORKERS"),
    ("OPENPSPS_LOG_LEVEL", "LOG_LEVEL"),
    ("OPENPSPS_ARTIFACT_DIR", "ARTIFACT_DIR"),
    ("OPENPSPS_ORACLE_MAX_T", "ORACLE_MAX_T"),
    ("OPENPSPS_ORACLE_MAX_STATES", "ORACLE_MAX_STATES"),
    ("OPENPSPS_FRONTIER_MAX_POINTS", "FRONTIER_MAX_POINTS"),
    ("OPENPSPS_ROW_TOL", "ROW_TOL"),
    ("OPENPSPS_STATIONARY_TOL", "STATIONARY_TOL"),
]


@cli.command()
def check():
    """Show the effective settings and the numerical stack."""
    console.print()
    console.print(f"[bold cyan]OpenPSPS v{__version__} - Configuration Check[/bold cyan]")
    console.print()

    table = Table(show_header=True)
    table.add_column("Setting", style="dim")
    table.add_column("Value")
    table.add_column("Source")
    for env, name in _SETTINGS:
        source = "[green]env[/green]" if env in os.environ else "default"
        table.add_row(env, str(getattr(constants, name)), source)
    console.print(table)
    console.print()

    stack = Table(show_header=False)
    stack.add_column("Package", style="dim")
    stack.add_column("Version")
    ready = True
    for package in ("numpy", "pandas", "scipy", "sklearn", "pydantic", "click", "rich"):
        try:
            stack.add_row(package, getattr(importlib.import_module(package), "__version__", "?"))
        except ImportError:
            stack.add_row(package, "[red]Not installed[/red]")
            ready = False
    console.print(stack)
    console.print()
    if ready:
        console.print("[green]Ready to solve![/green]")
    else:
        console.print("[red]Install the missing packages.[/red]")
    console.print()


def main():
    """Main entry point."""
    cli()


if __name__ == "__main__":
    main()
