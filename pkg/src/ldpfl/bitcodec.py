"""Fixed-point signed binary encoding of feature vectors.

Each real is written as ``l = m + n + 1`` bits: a sign bit (0 for positive),
then ``m`` integer bits and ``n`` fraction bits of the magnitude, most
significant first. Magnitudes outside ``[0, 2^m - 2^-n]`` saturate and the
scaled magnitude is truncated, never rounded.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ldpfl.base.errors import ConfigurationError, InvalidInputError, ShapeError

logger = logging.getLogger("ldpfl")

BitString = np.ndarray
FeatureVector = np.ndarray

MAX_MAGNITUDE_BITS = 53


@dataclass(frozen=True)
class CodecConfig:
    m: int = 4
    n: int = 5

    def __post_init__(self):
        if self.m < 0 or self.n < 0:
            raise ConfigurationError(f"m and n must be non-negative, got {self.m=}, {self.n=}")
        # scaled magnitudes must stay exact in a float64 significand
        if self.m + self.n > MAX_MAGNITUDE_BITS:
            raise ConfigurationError(
                f"m + n must be at most {MAX_MAGNITUDE_BITS}, got {self.m + self.n}"
            )

    @property
    def l(self) -> int:  # noqa: E743
        return self.m + self.n + 1

    @property
    def max_magnitude(self) -> float:
        return 2.0**self.m - 2.0**-self.n

    @property
    def _shifts(self) -> np.ndarray:
        return np.arange(self.m + self.n - 1, -1, -1, dtype=np.int64)


def check_bits(b: BitString) -> np.ndarray:
    b = np.asarray(b)
    if b.size and not np.isin(b, (0, 1)).all():
        raise InvalidInputError("bit strings may only hold 0 and 1")
    return b.astype(np.uint8, copy=False)


def encode_matrix(values: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    """Encode every row of ``values`` into one merged bit string per row."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"expected a 2-D array of feature rows, got shape {values.shape}")
    if values.shape[1] == 0:
        raise InvalidInputError("cannot encode an empty feature vector")
    if not np.isfinite(values).all():
        raise InvalidInputError("feature values must be finite")

    magnitude = np.abs(values)
    saturated = magnitude > cfg.max_magnitude
    if saturated.any():
        logger.debug(f"{int(saturated.sum())} values saturated at ±{cfg.max_magnitude}")
    # exact: scaling by a power of two never rounds
    scaled = np.floor(np.minimum(magnitude, cfg.max_magnitude) * 2.0**cfg.n).astype(np.int64)

    bits = np.empty((*values.shape, cfg.l), dtype=np.uint8)
    bits[..., 0] = values < 0
    bits[..., 1:] = (scaled[..., None] >> cfg._shifts) & 1
    return bits.reshape(values.shape[0], -1)


def encode_vector(v: FeatureVector, cfg: CodecConfig) -> BitString:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D feature vector, got shape {v.shape}")
    return encode_matrix(v[None, :], cfg)[0]


def encode_value(x: float, cfg: CodecConfig) -> BitString:
    return encode_vector(np.array([x], dtype=np.float64), cfg)


def decode_matrix(bits: np.ndarray, cfg: CodecConfig) -> np.ndarray:
    bits = check_bits(bits)
    if bits.ndim != 2:
        raise ShapeError(f"expected a 2-D array of bit rows, got shape {bits.shape}")
    if bits.shape[1] % cfg.l:
        raise ShapeError(f"bit string length {bits.shape[1]} is not a multiple of l={cfg.l}")

    groups = bits.reshape(bits.shape[0], -1, cfg.l).astype(np.int64)
    scaled = (groups[..., 1:] << cfg._shifts).sum(axis=-1)
    sign = np.where(groups[..., 0] == 1, -1.0, 1.0)
    return sign * scaled / 2.0**cfg.n


def decode_vector(b: BitString, cfg: CodecConfig) -> FeatureVector:
    b = np.asarray(b)
    if b.ndim != 1:
        raise ShapeError(f"expected a 1-D bit string, got shape {b.shape}")
    return decode_matrix(b[None, :], cfg)[0]


def decode_value(b: BitString, cfg: CodecConfig) -> float:
    b = np.asarray(b)
    if b.shape != (cfg.l,):
        raise ShapeError(f"expected {cfg.l} bits, got shape {b.shape}")
    return float(decode_vector(b, cfg)[0])


def bits_to_features(b: BitString) -> FeatureVector:
    return check_bits(b).astype(np.float64)
