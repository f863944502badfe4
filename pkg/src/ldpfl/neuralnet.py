"""Dense neural networks in plain numpy.

The same code serves as the client's local feature extractor and as the
federated client model trained on randomized bits.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ldpfl.base.errors import (
    ConfigurationError,
    DivergenceError,
    InvalidInputError,
    ShapeError,
)
from ldpfl.utils import rng as streams

logger = logging.getLogger("ldpfl")

ACTIVATIONS = ("relu", "softmax", "sigmoid")


@dataclass(frozen=True)
class LayerLayout:
    sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(size) for size in self.sizes))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.sizes) < 2:
            raise ConfigurationError(f"a layout needs at least 2 layers, got {self.sizes}")
        if any(size < 1 for size in self.sizes):
            raise ConfigurationError(f"layer sizes must be positive, got {self.sizes}")
        if len(self.activations) != len(self.sizes) - 1:
            raise ConfigurationError(
                f"{len(self.sizes) - 1} activations expected, got {len(self.activations)}"
            )
        unknown = set(self.activations) - set(ACTIVATIONS)
        if unknown:
            raise ConfigurationError(f"unknown activations {sorted(unknown)}")

    @classmethod
    def classifier(cls, sizes: tuple[int, ...] | list[int], hidden: str = "relu") -> "LayerLayout":
        """ReLU (or ``hidden``) everywhere, softmax on the output layer."""
        return cls(tuple(sizes), (hidden,) * (len(sizes) - 2) + ("softmax",))

    @property
    def depth(self) -> int:
        return len(self.sizes) - 1


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Weights (out × in) and biases (out) per layer."""

    layout: LayerLayout
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if len(weights) != self.layout.depth or len(biases) != self.layout.depth:
            raise ShapeError(f"expected {self.layout.depth} layers of parameters")
        for i, (w, b) in enumerate(zip(weights, biases)):
            expected = (self.layout.sizes[i + 1], self.layout.sizes[i])
            if w.shape != expected or b.shape != expected[:1]:
                raise ShapeError(
                    f"layer {i}: weights {w.shape} / bias {b.shape}, expected {expected} / {expected[:1]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise InvalidInputError(f"layer {i} holds non-finite parameters")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    def arrays(self) -> list[np.ndarray]:
        return [a for pair in zip(self.weights, self.biases) for a in pair]

    @classmethod
    def from_arrays(cls, layout: LayerLayout, arrays: list[np.ndarray]) -> "ModelParams":
        return cls(layout, tuple(arrays[0::2]), tuple(arrays[1::2]))

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality of layout and every parameter."""
        return self.layout == other.layout and all(
            np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays())
        )


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"
    learning_rate: float = 0.001
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 32

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))
        if self.kind not in ("sgd", "adam"):
            raise ConfigurationError(f"optimizer kind must be sgd or adam, got {self.kind!r}")
        if not self.learning_rate > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be at least 1, got {self.batch_size}")


def init_scale(fan_in: int) -> float:
    return math.sqrt(6.0 / fan_in)


def init_params(layout: LayerLayout, seed: streams.Seed) -> ModelParams:
    """Fan-in scaled uniform weights, zero biases."""
    rng = streams.as_generator(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layout.sizes[:-1], layout.sizes[1:]):
        limit = init_scale(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ModelParams(layout, tuple(weights), tuple(biases))


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    match kind:
        case "relu":
            return np.maximum(z, 0.0)
        case "sigmoid":
            return 0.5 * (1.0 + np.tanh(0.5 * z))
        case "softmax":
            shifted = np.exp(z - z.max(axis=-1, keepdims=True))
            return shifted / shifted.sum(axis=-1, keepdims=True)
    raise ConfigurationError(f"unknown activation {kind!r}")


def _as_batch(params: ModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    batch = x[None, :] if x.ndim == 1 else x
    if batch.ndim != 2 or batch.shape[1] != params.layout.sizes[0]:
        raise ShapeError(f"input shape {x.shape} does not match input size {params.layout.sizes[0]}")
    return batch


def _forward_all(params: ModelParams, batch: np.ndarray) -> list[np.ndarray]:
    activations = [batch]
    for w, b, kind in zip(params.weights, params.biases, params.layout.activations):
        activations.append(_activate(kind, activations[-1] @ w.T + b))
    return activations


def forward(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Output-layer activations for one input (1-D) or a batch (2-D)."""
    out = _forward_all(params, _as_batch(params, x))[-1]
    return out[0] if np.ndim(x) == 1 else out


def extract_features(params: ModelParams, x: np.ndarray, tap_layer: int) -> np.ndarray:
    """Activations at ``tap_layer`` (0 is the input, the output layer is not tappable)."""
    if not 0 <= tap_layer < params.layout.depth:
        raise ConfigurationError(
            f"tap layer {tap_layer} out of range, expected 0..{params.layout.depth - 1}"
        )
    out = _forward_all(params, _as_batch(params, x))[tap_layer]
    return out[0] if np.ndim(x) == 1 else out


def _cross_entropy(probabilities: np.ndarray, labels: np.ndarray) -> float:
    picked = probabilities[np.arange(labels.shape[0]), labels]
    return float(-np.log(np.clip(picked, 1e-300, None)).mean())


def _check_rows(params: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = _as_batch(params, x)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise ShapeError(f"{x.shape[0]} rows but labels of shape {y.shape}")
    classes = params.layout.sizes[-1]
    if y.size and (y.min() < 0 or y.max() >= classes):
        raise InvalidInputError(f"labels must lie in [0, {classes})")
    return x, y


def loss_and_gradients(
    params: ModelParams, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and its gradients, ordered as ``params.arrays()``."""
    if params.layout.activations[-1] != "softmax":
        raise ConfigurationError("cross-entropy training needs a softmax output layer")
    x, y = _check_rows(params, x, y)
    activations = _forward_all(params, x)
    loss = _cross_entropy(activations[-1], y)

    delta = activations[-1].copy()
    delta[np.arange(y.shape[0]), y] -= 1.0
    delta /= y.shape[0]

    grads: list[np.ndarray] = []
    for layer in range(params.layout.depth - 1, -1, -1):
        grads.append(delta.sum(axis=0))
        grads.append(delta.T @ activations[layer])
        if layer == 0:
            break
        upstream = delta @ params.weights[layer]
        below = activations[layer]
        match params.layout.activations[layer - 1]:
            case "relu":
                delta = upstream * (below > 0)
            case "sigmoid":
                delta = upstream * below * (1.0 - below)
            case kind:
                raise ConfigurationError(f"{kind} is only supported on the output layer")
    grads.reverse()
    return loss, grads


@dataclass
class _Adam:
    cfg: OptimizerConfig
    moments: list[np.ndarray] = field(default_factory=list)
    velocities: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def update(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        if not self.moments:
            self.moments = [np.zeros_like(a) for a in arrays]
            self.velocities = [np.zeros_like(a) for a in arrays]
        self.step += 1
        beta1, beta2 = self.cfg.betas
        lr = self.cfg.learning_rate * math.sqrt(1 - beta2**self.step) / (1 - beta1**self.step)
        updated = []
        for i, (a, g) in enumerate(zip(arrays, grads)):
            self.moments[i] = beta1 * self.moments[i] + (1 - beta1) * g
            self.velocities[i] = beta2 * self.velocities[i] + (1 - beta2) * g * g
            updated.append(a - lr * self.moments[i] / (np.sqrt(self.velocities[i]) + self.cfg.eps))
        return updated


def train(
    params: ModelParams,
    x: np.ndarray,
    y: np.ndarray,
    opt: OptimizerConfig,
    epochs: int,
    seed: streams.Seed,
    patience: int | None = None,
    min_delta: float = 1e-4,
) -> ModelParams:
    """Mini-batch cross-entropy training.

    With ``patience`` set, stops once the epoch loss fails to improve by
    ``min_delta`` for that many epochs in a row.
    """
    if epochs < 0:
        raise InvalidInputError(f"epochs must be non-negative, got {epochs}")
    x, y = _check_rows(params, x, y)
    if epochs == 0 or x.shape[0] == 0:
        return params

    arrays = [a.copy() for a in params.arrays()]
    adam = _Adam(opt) if opt.kind == "adam" else None
    best, stale = math.inf, 0
    for epoch in range(epochs):
        order = streams.substream(seed, streams.TRAIN, epoch).permutation(x.shape[0])
        total = 0.0
        for batch, start in enumerate(range(0, x.shape[0], opt.batch_size)):
            rows = order[start : start + opt.batch_size]
            current = ModelParams.from_arrays(params.layout, arrays)
            loss, grads = loss_and_gradients(current, x[rows], y[rows])
            if not math.isfinite(loss):
                raise DivergenceError(epoch, batch, loss)
            total += loss * rows.shape[0]
            if adam is not None:
                arrays = adam.update(arrays, grads)
            else:
                arrays = [a - opt.learning_rate * g for a, g in zip(arrays, grads)]
            if not all(np.isfinite(a).all() for a in arrays):
                raise DivergenceError(epoch, batch, math.nan)

        epoch_loss = total / x.shape[0]
        logger.debug(f"epoch {epoch + 1}/{epochs}: loss {epoch_loss:.4f}")
        if patience is not None:
            if epoch_loss < best - min_delta:
                best, stale = epoch_loss, 0
            else:
                stale += 1
                if stale >= patience:
                    logger.debug(f"loss plateaued, stopping after epoch {epoch + 1}")
                    break
    return ModelParams.from_arrays(params.layout, arrays)


def evaluate(params: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """(accuracy, mean cross-entropy) over the rows."""
    x, y = _check_rows(params, x, y)
    if x.shape[0] == 0:
        raise InvalidInputError("cannot evaluate on an empty set of rows")
    probabilities = forward(params, x)
    accuracy = float((probabilities.argmax(axis=1) == y).mean())
    return accuracy, _cross_entropy(probabilities, y)
