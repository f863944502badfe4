import csv
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ldpfl.base.errors import (
    ConfigurationError,
    FormatError,
    InvalidInputError,
    ParseError,
    PartitionError,
    ShapeError,
)
from ldpfl.utils import rng as streams

logger = logging.getLogger("ldpfl")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.ndim != 2 or labels.shape != (features.shape[0],):
            raise ShapeError(f"features {features.shape} and labels {labels.shape} do not line up")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise InvalidInputError(f"labels must lie in [0, {self.classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, indices: np.ndarray) -> "Dataset":
        return Dataset(self.features[indices], self.labels[indices], self.classes)


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    groups: tuple[np.ndarray, ...]
    mode: str
    sparsity: float | None = None

    def __post_init__(self):
        groups = tuple(np.asarray(group, dtype=np.int64) for group in self.groups)
        merged = np.concatenate(groups) if groups else np.empty(0, dtype=np.int64)
        if np.unique(merged).shape[0] != merged.shape[0]:
            raise PartitionError("partition groups overlap")
        object.__setattr__(self, "groups", groups)

    def __len__(self):
        return len(self.groups)

    @property
    def sizes(self) -> list[int]:
        return [int(group.shape[0]) for group in self.groups]


def _read_be32(f, what: str) -> int:
    offset = f.tell()
    data = f.read(4)
    if len(data) != 4:
        raise FormatError(f"truncated header while reading {what}", offset)
    (value,) = struct.unpack(">i", data)
    return value


def _read_idx(path: str | Path, magic: int) -> np.ndarray:
    # big endian: magic, one u32 per dimension, then u8 payload
    with open(path, "rb") as f:
        found = _read_be32(f, "magic")
        if found != magic:
            raise FormatError(f"{path}: magic {found:#010x}, expected {magic:#010x}", 0)
        dims = [_read_be32(f, f"dimension {i}") for i in range(magic & 0xFF)]
        offset = f.tell()
        payload = f.read()
    expected = math.prod(dims)
    if len(payload) != expected:
        raise FormatError(
            f"{path}: header declares {expected} bytes of data, found {len(payload)}", offset
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx(images_path: str | Path, labels_path: str | Path) -> Dataset:
    images = _read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    classes = int(labels.max()) + 1 if labels.size else 1
    logger.info(f"loaded {images.shape[0]} IDX rows of {features.shape[1]} features, {classes} classes")
    return Dataset(features, labels.astype(np.int64), classes)


def load_csv(path: str | Path, label_column: str) -> Dataset:
    features: list[list[float]] = []
    labels: list[int] = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file, expected a header row", str(path), 1)
        if label_column not in header:
            raise ConfigurationError(f"{path}: no column named {label_column!r} in {header}")
        label_index = header.index(label_column)
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} cells, found {len(row)}", str(path), line)
            try:
                label = int(row[label_index])
                values = [float(cell) for i, cell in enumerate(row) if i != label_index]
            except ValueError as e:
                raise ParseError(f"non-numeric cell: {e}", str(path), line) from e
            labels.append(label)
            features.append(values)
    if not labels:
        raise ParseError("no data rows", str(path))
    if min(labels) < 0:
        raise ParseError("labels must be non-negative", str(path))
    return Dataset(
        np.asarray(features, dtype=np.float64).reshape(len(labels), len(header) - 1),
        np.asarray(labels),
        max(labels) + 1,
    )


def write_csv(ds: Dataset, path: str | Path, label_column: str = "label") -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"x{i}" for i in range(ds.feature_dim)] + [label_column])
        for row, label in zip(ds.features, ds.labels):
            writer.writerow([repr(float(value)) for value in row] + [int(label)])


def synth_blobs(
    classes: int,
    per_class: int,
    dims: int,
    spread: float,
    seed: streams.Seed,
    center_scale: float = 5.0,
) -> Dataset:
    """Gaussian clusters around distinct uniformly drawn class means."""
    if classes < 1 or per_class < 1 or dims < 1:
        raise InvalidInputError(f"counts must be positive, got {classes=}, {per_class=}, {dims=}")
    if spread < 0:
        raise InvalidInputError(f"spread must be non-negative, got {spread}")
    rng = streams.substream(seed, streams.SYNTH)
    means = rng.uniform(-center_scale, center_scale, size=(classes, dims))
    labels = np.repeat(np.arange(classes), per_class)
    features = means[labels] + spread * rng.standard_normal((labels.shape[0], dims))
    return Dataset(features, labels, classes)


def partition_equal(ds: Dataset, n_h: int, seed: streams.Seed) -> PartitionPlan:
    """Shuffle, then cut into ``n_h`` groups of floor(T_r / n_h); leftovers are dropped."""
    if n_h < 1:
        raise ConfigurationError(f"client count must be at least 1, got {n_h}")
    if n_h > len(ds):
        raise ConfigurationError(f"cannot split {len(ds)} rows over {n_h} clients")
    order = streams.substream(seed, streams.PARTITION).permutation(len(ds))
    size = len(ds) // n_h
    if len(ds) % n_h:
        logger.debug(f"dropping {len(ds) % n_h} leftover rows to keep groups equal")
    return PartitionPlan(tuple(order[: size * n_h].reshape(n_h, size)), mode="equal")


def sparsity_concentration(sparsity: float) -> float:
    """Dirichlet concentration for a sparsity in (0, 1]; infinite at 1."""
    if not 0 < sparsity <= 1:
        raise ConfigurationError(f"sparsity must lie in (0, 1], got {sparsity}")
    return math.inf if sparsity == 1 else sparsity / (1 - sparsity)


def partition_non_iid(
    ds: Dataset, n: int, sparsity: float, seed: streams.Seed, max_attempts: int = 100
) -> PartitionPlan:
    """Per-class Dirichlet allocation of rows over clients.

    Lower ``sparsity`` means a smaller concentration and more skewed class
    mixes; ``sparsity=1`` splits every class evenly.
    """
    if n < 1:
        raise ConfigurationError(f"client count must be at least 1, got {n}")
    concentration = sparsity_concentration(sparsity)
    rng = streams.substream(seed, streams.PARTITION)
    by_class = [rng.permutation(np.flatnonzero(ds.labels == c)) for c in range(ds.classes)]

    for attempt in range(max_attempts):
        groups: list[list[np.ndarray]] = [[] for _ in range(n)]
        for indices in by_class:
            if math.isinf(concentration):
                proportions = np.full(n, 1.0 / n)
            else:
                proportions = rng.dirichlet(np.full(n, concentration))
            cuts = (np.cumsum(proportions) * indices.shape[0]).astype(int)[:-1]
            for client, chunk in enumerate(np.split(indices, cuts)):
                groups[client].append(chunk)
        merged = tuple(np.sort(np.concatenate(parts)) for parts in groups)
        if all(group.shape[0] > 0 for group in merged):
            return PartitionPlan(merged, mode="non_iid", sparsity=sparsity)
        logger.warning(f"non-IID draw {attempt + 1} left a client empty, redrawing")
    raise PartitionError(
        f"no allocation gave all {n} clients data after {max_attempts} draws; "
        "raise the sparsity or lower the client count"
    )


def local_split(
    indices: np.ndarray, seed: streams.Seed, client_id: int, test_fraction: float = 0.1
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (train, test) split of one client's rows."""
    if not 0 <= test_fraction < 1:
        raise ConfigurationError(f"test fraction must lie in [0, 1), got {test_fraction}")
    indices = np.asarray(indices)
    order = streams.substream(seed, streams.SPLIT, client_id).permutation(indices.shape[0])
    n_test = int(round(indices.shape[0] * test_fraction))
    if test_fraction > 0 and indices.shape[0] > 1:
        n_test = max(n_test, 1)
    return indices[order[n_test:]], indices[order[:n_test]]
