"""Run configuration: one JSON document, overridable from the command line.

Environment (a ``.env`` file is honoured):

- ``LDPFL_CONFIG``: default config path for the CLI
- ``LDPFL_LOG_LEVEL``: log level, INFO unless set
"""

import dataclasses
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from ldpfl.base.errors import ConfigurationError
from ldpfl.bitcodec import CodecConfig
from ldpfl.federation import FederationConfig
from ldpfl.neuralnet import OptimizerConfig
from ldpfl.randomizer import Mechanism

load_dotenv()
logger = logging.getLogger("ldpfl")


@dataclass(frozen=True)
class DataSourceConfig:
    kind: str = "synthetic"
    images_path: str | None = None
    labels_path: str | None = None
    csv_path: str | None = None
    label_column: str = "label"
    classes: int = 10
    per_class: int = 200
    dims: int = 16
    spread: float = 1.5

    def __post_init__(self):
        match self.kind:
            case "synthetic":
                pass
            case "idx":
                if not (self.images_path and self.labels_path):
                    raise ConfigurationError("idx sources need images_path and labels_path")
            case "csv":
                if not self.csv_path:
                    raise ConfigurationError("csv sources need csv_path")
            case _:
                raise ConfigurationError(f"unknown data source kind {self.kind!r}")

    def missing_files(self) -> list[str]:
        paths = (self.images_path, self.labels_path, self.csv_path)
        return [path for path in paths if path and not Path(path).exists()]


@dataclass(frozen=True)
class ExtractorConfig:
    hidden: tuple[int, ...] = (32,)
    tap_layer: int = 1
    epochs: int = 100
    patience: int | None = 10
    optimizer: OptimizerConfig = field(
        default_factory=lambda: OptimizerConfig(kind="adam", learning_rate=0.01)
    )

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        if not 0 <= self.tap_layer <= len(self.hidden):
            raise ConfigurationError(
                f"tap layer {self.tap_layer} must index the input or a hidden layer (0..{len(self.hidden)})"
            )
        if self.epochs < 1:
            raise ConfigurationError(f"extractor epochs must be at least 1, got {self.epochs}")


@dataclass(frozen=True)
class PartitionConfig:
    mode: str = "equal"
    sparsity: float = 0.5
    test_fraction: float = 0.1

    def __post_init__(self):
        if self.mode not in ("equal", "non_iid"):
            raise ConfigurationError(f"partition mode must be equal or non_iid, got {self.mode!r}")
        if not 0 < self.sparsity <= 1:
            raise ConfigurationError(f"sparsity must lie in (0, 1], got {self.sparsity}")
        if not 0 <= self.test_fraction < 1:
            raise ConfigurationError(f"test fraction must lie in [0, 1), got {self.test_fraction}")


@dataclass(frozen=True)
class RandomizerConfig:
    mechanism: Mechanism = Mechanism.SPLIT_OUE
    epsilon: float = 0.5
    alpha: float = 10.0
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism.parse(self.mechanism))
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if not self.alpha >= 1:
            raise ConfigurationError(f"alpha must be at least 1, got {self.alpha}")


@dataclass(frozen=True)
class RunConfig:
    data: DataSourceConfig = field(default_factory=DataSourceConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    randomizer: RandomizerConfig = field(default_factory=RandomizerConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    extractor: ExtractorConfig = field(default_factory=ExtractorConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    seed: int = 0
    out_dir: str = "runs/default"

    def __post_init__(self):
        if self.seed < 0:
            raise ConfigurationError(f"seed must be non-negative, got {self.seed}")
        if self.federation.seed != self.seed:
            object.__setattr__(
                self, "federation", dataclasses.replace(self.federation, seed=self.seed)
            )

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        return _build(cls, raw, "config")

    @classmethod
    def from_json(cls, path: str | Path) -> "RunConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from e
        except OSError as e:
            raise ConfigurationError(f"cannot read config {path}: {e}") from e
        logger.debug(f"loaded config from {path}")
        return cls.from_dict(raw)

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        epsilon: float | None = None,
        alpha: float | None = None,
        mechanism: str | None = None,
        clients: int | None = None,
        per_round: int | None = None,
        rounds: int | None = None,
        out_dir: str | Path | None = None,
        randomize: bool | None = None,
        partition: str | None = None,
        sparsity: float | None = None,
    ) -> "RunConfig":
        """Copy with every non-None flag applied."""
        randomizer = _replace(
            self.randomizer, epsilon=epsilon, alpha=alpha, mechanism=mechanism, enabled=randomize
        )
        federation = self.federation
        if clients is not None and per_round is None and federation.per_round == federation.clients:
            per_round = clients
        federation = _replace(
            federation, clients=clients, per_round=per_round, rounds=rounds, seed=seed
        )
        return _replace(
            self,
            seed=seed,
            out_dir=None if out_dir is None else str(out_dir),
            randomizer=randomizer,
            federation=federation,
            partition=_replace(self.partition, mode=partition, sparsity=sparsity),
        )


def _replace(obj, **changes):
    changes = {key: value for key, value in changes.items() if value is not None}
    return dataclasses.replace(obj, **changes) if changes else obj


def _plain(value):
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    if isinstance(value, Mechanism):
        return value.value
    return value


def _build(cls, raw: Any, where: str):
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{where}: expected an object, got {type(raw).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        nested = _NESTED.get((cls, name))
        kwargs[name] = _build(nested, value, f"{where}.{name}") if nested else value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"{where}: {e}") from e


_NESTED = {
    (RunConfig, "data"): DataSourceConfig,
    (RunConfig, "codec"): CodecConfig,
    (RunConfig, "randomizer"): RandomizerConfig,
    (RunConfig, "federation"): FederationConfig,
    (RunConfig, "extractor"): ExtractorConfig,
    (RunConfig, "partition"): PartitionConfig,
    (FederationConfig, "optimizer"): OptimizerConfig,
    (ExtractorConfig, "optimizer"): OptimizerConfig,
}
