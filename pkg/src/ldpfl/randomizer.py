"""Bit randomization of merged binary strings under ε-LDP.

Mechanisms:

- ``UE``: symmetric unary encoding, sensitivity fixed at 2.
- ``OUE``: optimized unary encoding, ones kept with probability 1/2.
- ``RAPPOR``: symmetric keep probability e^(ε/rl) / (1 + e^(ε/rl)) over the
  whole merged string.
- ``ALPHA_OUE``: ones kept with 1/(1+α), zeros with αE/(1+αE),
  E = e^(ε/(rl/2)).
- ``SPLIT_OUE``: as ``ALPHA_OUE`` for zeros; ones kept with α/(1+α) on even
  positions (S1) and 1/(1+α³) on odd positions (S2).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from ldpfl.base.errors import ConfigurationError, InvalidInputError, ShapeError
from ldpfl.bitcodec import BitString, check_bits
from ldpfl.utils.rng import Seed, as_generator, substream_seed

logger = logging.getLogger("ldpfl")


class Mechanism(str, Enum):
    UE = "ue"
    OUE = "oue"
    RAPPOR = "rappor"
    ALPHA_OUE = "alpha-oue"
    SPLIT_OUE = "split-oue"

    @classmethod
    def parse(cls, name: "str | Mechanism") -> "Mechanism":
        if isinstance(name, Mechanism):
            return name
        key = name.strip().lower().replace("_", "-")
        for mechanism in cls:
            if key in (mechanism.value, mechanism.name.lower().replace("_", "-")):
                return mechanism
        raise ConfigurationError(
            f"unknown mechanism {name!r}, expected one of {[m.value for m in cls]}"
        )

    @property
    def needs_sensitivity(self) -> bool:
        return self in (Mechanism.RAPPOR, Mechanism.ALPHA_OUE, Mechanism.SPLIT_OUE)

    @property
    def uses_alpha(self) -> bool:
        return self in (Mechanism.ALPHA_OUE, Mechanism.SPLIT_OUE)


@dataclass(frozen=True)
class RandomizerSpec:
    mechanism: Mechanism
    epsilon: float
    alpha: float = 10.0
    sensitivity: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism.parse(self.mechanism))
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be positive, got {self.epsilon}")
        if not self.alpha >= 1:
            raise ConfigurationError(f"alpha must be at least 1, got {self.alpha}")
        if not self.mechanism.needs_sensitivity:
            return
        if self.sensitivity is None or self.sensitivity < 1:
            raise ConfigurationError(f"{self.mechanism.value} needs a positive sensitivity")
        if self.mechanism.uses_alpha and self.sensitivity % 2:
            raise ConfigurationError(
                f"{self.mechanism.value} needs an even sensitivity, got {self.sensitivity}"
            )
        if self.mechanism is Mechanism.SPLIT_OUE and self.sensitivity % 4:
            raise ConfigurationError(
                f"split-oue needs a sensitivity divisible by 4, got {self.sensitivity}"
            )


@dataclass(frozen=True)
class BitFlipProbabilities:
    """Keep probabilities per input bit value, for S1 (even) and S2 (odd) positions."""

    keep_one_even: float
    keep_zero_even: float
    keep_one_odd: float
    keep_zero_odd: float

    def __post_init__(self):
        for name in ("keep_one_even", "keep_zero_even", "keep_one_odd", "keep_zero_odd"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")

    @classmethod
    def uniform(cls, keep_one: float, keep_zero: float) -> "BitFlipProbabilities":
        return cls(keep_one, keep_zero, keep_one, keep_zero)

    def keep_arrays(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        odd = np.arange(length) % 2 == 1
        keep_one = np.where(odd, self.keep_one_odd, self.keep_one_even)
        keep_zero = np.where(odd, self.keep_zero_odd, self.keep_zero_even)
        return keep_one, keep_zero

    def output_one_arrays(self, length: int) -> tuple[np.ndarray, np.ndarray]:
        """Pr[output 1 | input 1] and Pr[output 1 | input 0] per position."""
        keep_one, keep_zero = self.keep_arrays(length)
        return keep_one, 1.0 - keep_zero


def _expit(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def basic_keep_probability(epsilon: float, sensitivity: int) -> float:
    if not epsilon > 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    if sensitivity < 1:
        raise InvalidInputError(f"sensitivity must be at least 1, got {sensitivity}")
    return _expit(epsilon / sensitivity)


def probabilities_for(spec: RandomizerSpec) -> BitFlipProbabilities:
    # every probability is a logistic of a log-odds, so α³ and E never overflow
    match spec.mechanism:
        case Mechanism.UE:
            p = basic_keep_probability(spec.epsilon, 2)
            return BitFlipProbabilities.uniform(p, p)
        case Mechanism.OUE:
            return BitFlipProbabilities.uniform(0.5, _expit(spec.epsilon))
        case Mechanism.RAPPOR:
            p = basic_keep_probability(spec.epsilon, spec.sensitivity)
            return BitFlipProbabilities.uniform(p, p)
        case Mechanism.ALPHA_OUE | Mechanism.SPLIT_OUE:
            log_alpha = math.log(spec.alpha)
            keep_zero = _expit(log_alpha + spec.epsilon / (spec.sensitivity / 2))
            if spec.mechanism is Mechanism.ALPHA_OUE:
                return BitFlipProbabilities.uniform(_expit(-log_alpha), keep_zero)
            return BitFlipProbabilities(
                keep_one_even=_expit(log_alpha),
                keep_zero_even=keep_zero,
                keep_one_odd=_expit(-3 * log_alpha),
                keep_zero_odd=keep_zero,
            )
        case _:
            raise ConfigurationError(f"unsupported mechanism {spec.mechanism!r}")


def pad_to_multiple(r: int, l: int, multiple: int) -> int:  # noqa: E741
    """Count of l-bit zero values to append so the merged length divides by ``multiple``."""
    if r < 1 or l < 1 or multiple < 1:
        raise InvalidInputError(f"r, l and multiple must be positive, got {r=}, {l=}, {multiple=}")
    pad = 0
    while ((r + pad) * l) % multiple:
        pad += 1
    return pad


def pad_for_split(r: int, l: int) -> int:  # noqa: E741
    return pad_to_multiple(r, l, 4)


def pad_for(mechanism: Mechanism, r: int, l: int) -> int:  # noqa: E741
    """Padding that gives ``mechanism`` a sensitivity it accepts."""
    match mechanism:
        case Mechanism.SPLIT_OUE:
            return pad_for_split(r, l)
        case Mechanism.ALPHA_OUE:
            return pad_to_multiple(r, l, 2)
    return 0


def _perturb(
    bits: np.ndarray, probabilities: BitFlipProbabilities, rng: np.random.Generator
) -> np.ndarray:
    keep_one, keep_zero = probabilities.keep_arrays(bits.shape[-1])
    keep = np.where(bits == 1, keep_one, keep_zero)
    flip = rng.random(bits.shape) >= keep
    return np.where(flip, 1 - bits, bits).astype(np.uint8)


def _check_length(length: int, spec: RandomizerSpec) -> None:
    if spec.sensitivity is not None and length != spec.sensitivity:
        raise ShapeError(
            f"bit string has {length} bits but the spec declares sensitivity {spec.sensitivity}"
        )


def randomize(b: BitString, spec: RandomizerSpec, rng_seed: Seed) -> BitString:
    b = check_bits(b)
    if b.ndim != 1:
        raise ShapeError(f"expected a 1-D bit string, got shape {b.shape}")
    _check_length(b.shape[0], spec)
    return _perturb(b, probabilities_for(spec), as_generator(rng_seed))


def randomize_dataset(rows: Sequence[BitString] | np.ndarray, spec: RandomizerSpec, seed: Seed) -> np.ndarray:
    """Randomize each row with its own substream ``(seed, row index)``."""
    if len(rows) == 0:
        return np.empty((0, spec.sensitivity or 0), dtype=np.uint8)
    lengths = {len(row) for row in rows}
    if len(lengths) != 1:
        raise ShapeError(f"rows have differing lengths {sorted(lengths)}")
    matrix = check_bits(np.asarray(rows))
    _check_length(matrix.shape[1], spec)

    probabilities = probabilities_for(spec)
    out = np.empty_like(matrix)
    for i, row in enumerate(matrix):
        out[i] = _perturb(row, probabilities, np.random.default_rng(substream_seed(seed, i)))
    logger.debug(
        f"randomized {len(out)} rows of {matrix.shape[1]} bits with {spec.mechanism.value}, "
        f"one-rate {matrix.mean():.3f} -> {out.mean():.3f}"
    )
    return out
