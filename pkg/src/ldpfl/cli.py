import json
import logging
import math
from contextlib import contextmanager
from pathlib import Path
from typing import Annotated

import numpy as np
import typer
from rich.console import Console
from rich.table import Table

from ldpfl.base.config import RunConfig
from ldpfl.base.errors import (
    ConfigurationError,
    InvalidInputError,
    LDPFLError,
    RoundError,
    ShapeError,
    StageError,
)
from ldpfl.data import Dataset, write_csv
from ldpfl.export.checkpoint import write_checkpoint
from ldpfl.export.metrics import MetricsWriter, read_metrics, render_summary, write_convergence_csv
from ldpfl.export.prepared import read_prepared, write_prepared
from ldpfl.federation import run_simulation
from ldpfl.pipeline import federated_datasets, prepare_all
from ldpfl.privacy import (
    analytic_ratio,
    balanced_pairs,
    empirical_epsilon,
    epsilon_from_pq,
    exact_audit,
    protocol_budget,
)
from ldpfl.randomizer import Mechanism, RandomizerSpec, basic_keep_probability, probabilities_for

app = typer.Typer(no_args_is_help=True, help="Locally differentially private federated learning.")
console = Console()
logger = logging.getLogger("ldpfl")

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_VERIFY = 3

IDENTITY_EPSILONS = (0.1, 0.5, 1.0, 5.0)
IDENTITY_ALPHAS = (1.0, 4.0, 10.0)
IDENTITY_SENSITIVITIES = (4, 8, 20, 10240, 11520, 20480)
AUDIT_EPSILONS = (0.5, 1.0)
AUDIT_BITS = 4
AUDIT_MIN_COUNT = 500
# S1 and S2 each swap one bit
SPLIT_AUDIT_PAIR = (np.array([1, 1, 0, 0], dtype=np.uint8), np.array([0, 0, 1, 1], dtype=np.uint8))
AUDIT_PAIR = (np.array([1, 0, 0, 0], dtype=np.uint8), np.array([0, 0, 1, 0], dtype=np.uint8))
MONTE_CARLO_TOLERANCE = 0.05
EXACT_TOLERANCE = 1e-9

PREPARED_GLOB = "client_*.ldpfld"

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", envvar="LDPFL_CONFIG", help="JSON run config, defaults built in"),
]
SeedOption = Annotated[int | None, typer.Option(help="Master seed")]
EpsilonOption = Annotated[float | None, typer.Option(help="Privacy budget ε")]
AlphaOption = Annotated[float | None, typer.Option(help="Privacy-utility trade-off α (>= 1)")]
MechanismOption = Annotated[
    str | None, typer.Option(help="ue, oue, rappor, alpha-oue or split-oue")
]
ClientsOption = Annotated[int | None, typer.Option(help="Number of clients N")]
PerRoundOption = Annotated[int | None, typer.Option(help="Clients selected per round k")]
RoundsOption = Annotated[int | None, typer.Option(help="Federation rounds E")]
OutOption = Annotated[Path | None, typer.Option("--out", help="Run directory")]
PartitionOption = Annotated[str | None, typer.Option(help="equal or non-iid")]
SparsityOption = Annotated[float | None, typer.Option(help="Non-IID sparsity in (0, 1]")]


def _exit_code(e: LDPFLError) -> int:
    if isinstance(e, (StageError, RoundError)):
        e = e.cause
    if isinstance(e, (ConfigurationError, InvalidInputError)):
        return EXIT_USAGE
    return EXIT_DATA


@contextmanager
def _handled():
    try:
        yield
    except LDPFLError as e:
        logger.error(f"[red]{type(e).__name__}[/red]: {e}", extra={"markup": True})
        raise typer.Exit(_exit_code(e)) from e
    except OSError as e:
        logger.error(f"[red]I/O error[/red]: {e}", extra={"markup": True})
        raise typer.Exit(EXIT_DATA) from e


def _load_config(config: Path | None, fallback: Path | None = None, **overrides) -> RunConfig:
    if config is not None:
        cfg = RunConfig.from_json(config)
    elif fallback is not None and fallback.exists():
        logger.info(f"using the config saved with the prepared data: {fallback}")
        cfg = RunConfig.from_json(fallback)
    else:
        cfg = RunConfig()
    if overrides.get("partition") is not None:
        overrides["partition"] = overrides["partition"].replace("-", "_")
    cfg = cfg.with_overrides(**overrides)
    missing = cfg.data.missing_files()
    if missing:
        raise ConfigurationError(f"data files not found: {missing}")
    return cfg


@app.command()
def prepare(
    config: ConfigOption = None,
    seed: SeedOption = None,
    epsilon: EpsilonOption = None,
    alpha: AlphaOption = None,
    mechanism: MechanismOption = None,
    clients: ClientsOption = None,
    per_round: PerRoundOption = None,
    out: OutOption = None,
    partition: PartitionOption = None,
    sparsity: SparsityOption = None,
    randomize: bool | None = typer.Option(
        None, "--randomize/--no-randomize", help="Disable for the non-private baseline"
    ),
    debug: bool = typer.Option(False, help="Also write the raw tapped features as CSV"),
):
    """Train local extractors, encode and randomize each client's data."""
    with _handled():
        cfg = _load_config(
            config,
            seed=seed,
            epsilon=epsilon,
            alpha=alpha,
            mechanism=mechanism,
            clients=clients,
            per_round=per_round,
            out_dir=out,
            randomize=randomize,
            partition=partition,
            sparsity=sparsity,
        )
        out_dir = Path(cfg.out_dir)
        clients_dir = out_dir / "clients"
        clients_dir.mkdir(parents=True, exist_ok=True)
        for stale in clients_dir.glob(PREPARED_GLOB):
            stale.unlink()

        outputs = prepare_all(cfg)
        for output in outputs:
            write_prepared(output.prepared, clients_dir / f"client_{output.client_id:03d}.ldpfld")
            if debug:
                debug_dir = out_dir / "debug"
                debug_dir.mkdir(exist_ok=True)
                labels = output.prepared.labels
                write_csv(
                    Dataset(output.raw_features, labels, output.prepared.classes),
                    debug_dir / f"client_{output.client_id:03d}_features.csv",
                )
                logger.warning(
                    f"client {output.client_id}: raw features written to {debug_dir}, keep them private"
                )
        (out_dir / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

        table = Table(title=f"prepared {len(outputs)} clients in {clients_dir}")
        for column in ("client", "rows", "r", "pad", "sensitivity rl", "randomized width"):
            table.add_column(column, justify="right")
        for output in outputs:
            prepared = output.prepared
            table.add_row(
                str(output.client_id),
                str(len(prepared)),
                str(prepared.r),
                str(prepared.pad),
                str(output.sensitivity.delta_f),
                str(prepared.width),
            )
        console.print(table)

        specs = [output.spec for output in outputs if output.spec is not None]
        if specs:
            budget = protocol_budget(specs)
            console.print(
                f"mechanism {cfg.randomizer.mechanism.value}, α={cfg.randomizer.alpha}: "
                f"protocol ε = [bold]{budget.epsilon}[/bold] ({budget.mechanism})"
            )
        else:
            console.print("[yellow]randomization disabled: prepared data is NOT private[/yellow]")


def _read_client_files(clients_dir: Path, cfg: RunConfig):
    paths = sorted(clients_dir.glob(PREPARED_GLOB))
    if len(paths) != cfg.federation.clients:
        raise ShapeError(
            f"found {len(paths)} prepared client files in {clients_dir}, "
            f"config expects {cfg.federation.clients}"
        )
    prepared = [read_prepared(path) for path in paths]
    for path, data in zip(paths, prepared):
        if data.l != cfg.codec.l:
            raise ShapeError(f"{path}: values are {data.l} bits wide, config codec gives {cfg.codec.l}")
    widths = {data.width for data in prepared}
    if len(widths) != 1:
        raise ShapeError(f"prepared clients disagree on row width: {sorted(widths)}")
    return prepared


@app.command()
def simulate(
    config: ConfigOption = None,
    seed: SeedOption = None,
    clients: ClientsOption = None,
    per_round: PerRoundOption = None,
    rounds: RoundsOption = None,
    out: OutOption = None,
):
    """Federate a DNN over the prepared client data."""
    with _handled():
        saved = (out if out is not None else Path(RunConfig().out_dir)) / "config.json"
        cfg = _load_config(
            config,
            fallback=saved,
            seed=seed,
            clients=clients,
            per_round=per_round,
            rounds=rounds,
            out_dir=out,
        )
        run_dir = Path(cfg.out_dir)
        prepared = _read_client_files(run_dir / "clients", cfg)

        datasets = federated_datasets(prepared)
        writer = MetricsWriter(run_dir)
        try:
            result = run_simulation(cfg.federation, datasets, on_round=writer.write)
        except RoundError as e:
            logger.error(f"{len(e.history)} completed rounds are in {writer.path}")
            raise
        checkpoint = write_checkpoint(result.params, run_dir / "model.ldpfl")

        final = result.history[-1]
        console.print(
            f"final global accuracy [bold]{final.global_accuracy:.4f}[/bold] after {len(result.history)} rounds; "
            f"metrics in {writer.path}, model in {checkpoint}"
        )


class _Checks:
    def __init__(self, title: str):
        self.table = Table(title=title)
        for column in ("check", "value", "target", "status"):
            self.table.add_column(column)
        self.failed = 0

    def add(self, name: str, value: float, target: str, passed: bool, warn_only: bool = False):
        if passed:
            status = "[green]pass[/green]"
        elif warn_only:
            status = "[yellow]warn[/yellow]"
        else:
            status = "[red]FAIL[/red]"
            self.failed += 1
        self.table.add_row(name, f"{value:.10g}", target, status)


def _identity_checks(checks: _Checks, epsilons, alphas, mechanisms) -> None:
    for mechanism in mechanisms:
        worst, count = 0.0, 0
        for epsilon in epsilons:
            for alpha in alphas:
                for rl in IDENTITY_SENSITIVITIES:
                    spec = RandomizerSpec(mechanism, epsilon, alpha, rl)
                    target = math.exp(epsilon)
                    worst = max(worst, abs(analytic_ratio(spec) - target) / target)
                    count += 1
        checks.add(
            f"{mechanism.value} ratio = e^ε ({count} cases)",
            worst,
            f"rel err <= {EXACT_TOLERANCE}",
            worst <= EXACT_TOLERANCE,
        )


def _unary_checks(checks: _Checks, epsilons) -> None:
    for epsilon in epsilons:
        p = basic_keep_probability(epsilon, 2)
        recovered = epsilon_from_pq(p, 1 - p)
        checks.add(f"ue ε={epsilon}", recovered, f"{epsilon}", math.isclose(recovered, epsilon, rel_tol=1e-9))
        oue = probabilities_for(RandomizerSpec(Mechanism.OUE, epsilon))
        recovered = epsilon_from_pq(oue.keep_one_even, 1 - oue.keep_zero_even)
        checks.add(f"oue ε={epsilon}", recovered, f"{epsilon}", math.isclose(recovered, epsilon, rel_tol=1e-9))


def _audit_checks(checks: _Checks, epsilons, alpha: float, mechanisms, trials: int, seed: int) -> None:
    for mechanism in mechanisms:
        split = mechanism is Mechanism.SPLIT_OUE
        pairs = balanced_pairs(AUDIT_BITS, split=split)
        for epsilon in epsilons:
            spec = RandomizerSpec(mechanism, epsilon, alpha, AUDIT_BITS)
            results = [exact_audit(spec, v1, v2) for v1, v2 in pairs]
            extremal = max(result.extremal_log_ratio for result in results)
            worst = max(result.worst_log_ratio for result in results)
            label = f"{mechanism.value} rl={AUDIT_BITS} ε={epsilon}"
            checks.add(
                f"{label} extremal", extremal, f"= {epsilon}", abs(extremal - epsilon) <= EXACT_TOLERANCE
            )
            # the split bound is only tight at the extremal output, so its worst case informs
            checks.add(
                f"{label} worst case",
                worst,
                f"<= {epsilon}",
                worst <= epsilon + EXACT_TOLERANCE,
                warn_only=split,
            )

            if trials:
                v1, v2 = SPLIT_AUDIT_PAIR if split else AUDIT_PAIR
                estimate = empirical_epsilon(spec, v1, v2, trials, seed, min_count=AUDIT_MIN_COUNT)
                exact = exact_audit(
                    spec, v1, v2, min_probability=AUDIT_MIN_COUNT / trials
                ).worst_log_ratio
                checks.add(
                    f"{label} monte carlo ({trials} trials)",
                    estimate,
                    f"{exact:.6f} ± {MONTE_CARLO_TOLERANCE}",
                    abs(estimate - exact) <= MONTE_CARLO_TOLERANCE,
                )


@app.command()
def verify(
    epsilon: EpsilonOption = None,
    alpha: AlphaOption = None,
    mechanism: MechanismOption = None,
    trials: int = typer.Option(1_000_000, help="Monte-Carlo trials, 0 to skip"),
    seed: int = typer.Option(0, help="Seed for the Monte-Carlo audit"),
):
    """Check the randomizers' privacy guarantees analytically and by audit."""
    with _handled():
        if epsilon is not None and not epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
        chosen = [Mechanism.parse(mechanism)] if mechanism else list(Mechanism)
        alpha_mechanisms = [m for m in chosen if m.uses_alpha]
        epsilons = IDENTITY_EPSILONS if epsilon is None else (epsilon,)
        alphas = IDENTITY_ALPHAS if alpha is None else (alpha,)

        checks = _Checks("privacy verification")
        _identity_checks(checks, epsilons, alphas, alpha_mechanisms)
        if {Mechanism.UE, Mechanism.OUE} & set(chosen):
            _unary_checks(checks, epsilons)
        _audit_checks(
            checks,
            AUDIT_EPSILONS if epsilon is None else (epsilon,),
            10.0 if alpha is None else alpha,
            alpha_mechanisms,
            trials,
            seed,
        )
        console.print(checks.table)

    if checks.failed:
        console.print(f"[red]{checks.failed} check(s) failed[/red]")
        raise typer.Exit(EXIT_VERIFY)
    console.print("[green]all checks passed[/green]")


def _run_name(path: Path, taken: set[str]) -> str:
    name = path.parent.name if path.name == "metrics.jsonl" and path.parent.name else path.stem
    candidate, suffix = name, 2
    while candidate in taken:
        candidate, suffix = f"{name}-{suffix}", suffix + 1
    return candidate


@app.command()
def report(
    metrics: Annotated[list[Path] | None, typer.Argument(help="metrics.jsonl files, one per run")] = None,
    out: Path = typer.Option(Path("report"), "--out", help="Directory for the CSV and summary files"),
):
    """Per-run convergence CSVs and a comparison table of the runs."""
    if not metrics:
        console.print("[red]report needs at least one metrics file[/red]")
        raise typer.Exit(EXIT_USAGE)
    with _handled():
        out.mkdir(parents=True, exist_ok=True)
        runs: dict[str, list[dict]] = {}
        for path in metrics:
            name = _run_name(path, set(runs))
            runs[name] = read_metrics(path)
            if not runs[name]:
                raise InvalidInputError(f"{path} holds no rounds")
            csv_path = write_convergence_csv(runs[name], out / f"{name}.csv")
            logger.info(f"{name}: {len(runs[name])} rounds -> {csv_path}")
        summary = render_summary(runs)
        (out / "summary.md").write_text(summary)
        console.print(summary)


if __name__ == "__main__":
    app()
