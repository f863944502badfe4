"""Seed-averaged sweeps over α and over the client count.

    uv run python utils/sweep.py alpha --seeds 5
    uv run python utils/sweep.py clients --seeds 5 --rounds 20
"""

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from ldpfl.base.config import RunConfig
from ldpfl.federation import run_simulation
from ldpfl.pipeline import federated_datasets, prepare_all

app = typer.Typer()
console = Console()


def final_accuracy(cfg: RunConfig) -> float:
    outputs = prepare_all(cfg)
    datasets = federated_datasets([output.prepared for output in outputs])
    return run_simulation(cfg.federation, datasets).history[-1].global_accuracy


def sweep(title: str, label: str, values: list, build, seeds: int) -> None:
    table = Table(title=title)
    table.add_column(label, justify="right")
    table.add_column("mean accuracy", justify="right")
    table.add_column("std", justify="right")
    for value in values:
        accuracies = [final_accuracy(build(value, seed)) for seed in range(seeds)]
        table.add_row(str(value), f"{np.mean(accuracies):.4f}", f"{np.std(accuracies):.4f}")
    console.print(table)


@app.command()
def alpha(
    values: list[float] = typer.Option([1.0, 4.0, 10.0], "--value", help="α values to try"),
    seeds: int = typer.Option(5, help="Seeds averaged per value"),
    rounds: int = typer.Option(30, help="Federation rounds"),
    epsilon: float = typer.Option(0.5, help="Privacy budget ε"),
):
    sweep(
        f"α sweep at ε={epsilon}",
        "α",
        values,
        lambda value, seed: RunConfig(seed=seed).with_overrides(alpha=value, rounds=rounds, epsilon=epsilon),
        seeds,
    )


@app.command()
def clients(
    values: list[int] = typer.Option([2, 5, 10], "--value", help="Client counts to try"),
    seeds: int = typer.Option(5, help="Seeds averaged per value"),
    rounds: int = typer.Option(30, help="Federation rounds"),
):
    # the total row count stays fixed, so more clients means fewer rows each
    sweep(
        "client-count sweep",
        "clients",
        values,
        lambda value, seed: RunConfig(seed=seed).with_overrides(clients=value, rounds=rounds),
        seeds,
    )


if __name__ == "__main__":
    app()
