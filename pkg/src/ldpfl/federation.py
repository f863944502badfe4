"""In-process federated averaging over clients' randomized datasets.

Clients and the server exchange serialized parameters only (see
``ldpfl.export.checkpoint``); the server object never holds client data.
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ldpfl.base.errors import (
    ConfigurationError,
    InvalidInputError,
    RoundError,
    ShapeError,
)
from ldpfl.data import Dataset
from ldpfl.export.checkpoint import decode_params, encode_params
from ldpfl.neuralnet import (
    LayerLayout,
    ModelParams,
    OptimizerConfig,
    evaluate,
    init_params,
    train,
)
from ldpfl.utils import rng as streams

logger = logging.getLogger("ldpfl")


@dataclass(frozen=True)
class FederationConfig:
    clients: int = 2
    per_round: int | None = None
    local_epochs: int = 2
    rounds: int = 30
    optimizer: OptimizerConfig = field(default_factory=lambda: OptimizerConfig(kind="adam"))
    hidden: tuple[int, ...] = (64,)
    seed: int = 0

    def __post_init__(self):
        if self.per_round is None:
            object.__setattr__(self, "per_round", self.clients)
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if not 1 <= self.per_round <= self.clients:
            raise ConfigurationError(
                f"need 1 <= clients per round <= clients, got {self.per_round} of {self.clients}"
            )
        if self.local_epochs < 1 or self.rounds < 1:
            raise ConfigurationError(
                f"local epochs and rounds must be at least 1, got {self.local_epochs}, {self.rounds}"
            )


@dataclass(frozen=True)
class ClientMetrics:
    client_id: int
    train_loss: float
    train_accuracy: float


@dataclass(frozen=True)
class RoundRecord:
    round: int
    selected: tuple[int, ...]
    clients: tuple[ClientMetrics, ...]
    global_loss: float
    global_accuracy: float

    def to_dict(self) -> dict:
        record = asdict(self)
        record["selected"] = list(self.selected)
        record["clients"] = [asdict(metrics) for metrics in self.clients]
        return record


@dataclass
class SimulationResult:
    history: list[RoundRecord]
    params: ModelParams


@dataclass(eq=False)
class Client:
    client_id: int
    train_set: Dataset
    test_set: Dataset
    seed: streams.Seed
    params: ModelParams | None = None

    def receive(self, payload: bytes) -> None:
        self.params = decode_params(payload)

    def fit(self, opt: OptimizerConfig, epochs: int, round_index: int) -> tuple[bytes, ClientMetrics]:
        params = train(
            self.params,
            self.train_set.features,
            self.train_set.labels,
            opt,
            epochs,
            streams.substream_seed(self.seed, round_index),
        )
        accuracy, loss = evaluate(params, self.train_set.features, self.train_set.labels)
        return encode_params(params), ClientMetrics(self.client_id, loss, accuracy)

    def score(self) -> tuple[float, float, int]:
        """(loss, accuracy, row count) of the resident model on the held-out split."""
        if len(self.test_set) == 0:
            return 0.0, 0.0, 0
        accuracy, loss = evaluate(self.params, self.test_set.features, self.test_set.labels)
        return loss, accuracy, len(self.test_set)


@dataclass(eq=False)
class Server:
    params: ModelParams

    def broadcast(self) -> bytes:
        return encode_params(self.params)

    def aggregate(self, payloads: list[bytes]) -> bytes:
        self.params = federated_average([decode_params(payload) for payload in payloads])
        return self.broadcast()


def federated_average(updates: Sequence[ModelParams]) -> ModelParams:
    """Elementwise mean of every weight and bias.

    Each element is the sum of its sorted values divided once by the count,
    so the result does not depend on the order of ``updates`` and is exact
    whenever the sum is. Elements on which every update agrees keep that
    value unchanged.
    """
    if not updates:
        raise InvalidInputError("cannot average an empty list of updates")
    layout = updates[0].layout
    if any(update.layout != layout for update in updates):
        raise ShapeError("all updates must share one layout")

    averaged = []
    for arrays in zip(*(update.arrays() for update in updates)):
        stacked = np.stack(arrays)
        low = stacked.min(axis=0)
        mean = np.sort(stacked, axis=0).sum(axis=0) / len(updates)
        averaged.append(np.where(stacked.max(axis=0) == low, low, mean))
    return ModelParams.from_arrays(layout, averaged)


def select_clients(n: int, k: int, round_index: int, seed: streams.Seed) -> tuple[int, ...]:
    """Uniform random k-subset of client ids, fixed by (seed, round)."""
    if not 1 <= k <= n:
        raise ConfigurationError(f"cannot select {k} of {n} clients")
    rng = streams.substream(seed, streams.SELECT, round_index)
    return tuple(sorted(int(i) for i in rng.choice(n, size=k, replace=False)))


def run_round(
    clients: Sequence[Client],
    global_params: ModelParams,
    cfg: FederationConfig,
    round_index: int,
    local_epochs: int | None = None,
) -> tuple[ModelParams, RoundRecord]:
    epochs = cfg.local_epochs if local_epochs is None else local_epochs
    server = Server(global_params)
    outbound = server.broadcast()
    selected = select_clients(len(clients), cfg.per_round, round_index, cfg.seed)

    payloads, metrics = [], []
    for client_id in selected:
        client = clients[client_id]
        client.receive(outbound)
        try:
            payload, client_metrics = client.fit(cfg.optimizer, epochs, round_index)
        except Exception as e:
            raise RoundError(client.client_id, round_index, e) from e
        payloads.append(payload)
        metrics.append(client_metrics)

    # every client takes the new model, selected or not
    inbound = server.aggregate(payloads)
    for client in clients:
        client.receive(inbound)

    scores = [client.score() for client in clients]
    total = sum(count for *_, count in scores)
    global_loss = sum(loss * count for loss, _, count in scores) / total if total else float("nan")
    global_accuracy = sum(acc * count for _, acc, count in scores) / total if total else float("nan")
    record = RoundRecord(round_index, selected, tuple(metrics), global_loss, global_accuracy)
    return server.params, record


def run_simulation(
    cfg: FederationConfig,
    datasets: Sequence[tuple[Dataset, Dataset]],
    on_round: Callable[[RoundRecord], None] | None = None,
) -> SimulationResult:
    """Run ``cfg.rounds`` rounds over per-client (train, test) datasets."""
    if len(datasets) != cfg.clients:
        raise ConfigurationError(f"config expects {cfg.clients} clients, got {len(datasets)} datasets")
    dims = {part.feature_dim for pair in datasets for part in pair}
    classes = {part.classes for pair in datasets for part in pair}
    if len(dims) != 1 or len(classes) != 1:
        raise ShapeError(f"client datasets disagree on feature width {dims} or classes {classes}")

    layout = LayerLayout.classifier([dims.pop(), *cfg.hidden, classes.pop()])
    params = init_params(layout, streams.substream_seed(cfg.seed, streams.INIT))
    clients = [
        Client(i, train_set, test_set, streams.substream_seed(cfg.seed, streams.TRAIN, i))
        for i, (train_set, test_set) in enumerate(datasets)
    ]
    logger.info(
        f"federating {cfg.clients} clients ({cfg.per_round} per round) for {cfg.rounds} rounds, "
        f"model {layout.sizes}"
    )

    history: list[RoundRecord] = []
    for round_index in range(cfg.rounds):
        try:
            params, record = run_round(clients, params, cfg, round_index)
        except RoundError as e:
            e.history = history
            raise
        history.append(record)
        logger.info(
            f"round {round_index + 1}/{cfg.rounds}: "
            f"global accuracy [bold]{record.global_accuracy:.4f}[/bold], loss {record.global_loss:.4f}",
            extra={"markup": True},
        )
        if on_round is not None:
            on_round(record)
    return SimulationResult(history, params)
