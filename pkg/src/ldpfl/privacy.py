"""Privacy accounting and audits for the bit randomizers.

All ratio arithmetic runs in natural-log space.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ldpfl.base.errors import (
    ConfigurationError,
    InvalidInputError,
    InvalidMechanismError,
    PreconditionError,
)
from ldpfl.bitcodec import BitString, CodecConfig, check_bits
from ldpfl.randomizer import Mechanism, RandomizerSpec, _perturb, probabilities_for
from ldpfl.utils import rng as streams

logger = logging.getLogger("ldpfl")

MIN_AUDIT_TRIALS = 100_000
MAX_AUDIT_BITS = 8
DEFAULT_MIN_COUNT = 20
AUDIT_CHUNK = 1 << 17


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    mechanism: str = "unknown"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise InvalidInputError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class SensitivityRecord:
    r: int
    l: int  # noqa: E741

    @property
    def delta_f(self) -> int:
        return self.r * self.l


@dataclass(frozen=True)
class AuditResult:
    worst_log_ratio: float
    extremal_log_ratio: float


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


def epsilon_from_pq(p: float, q: float) -> float:
    """ε of a unary-encoding randomizer keeping ones with ``p`` and raising zeros with ``q``."""
    if not (0 < p < 1 and 0 < q < 1):
        raise InvalidInputError(f"p and q must lie strictly inside (0, 1), got {p=}, {q=}")
    epsilon = _logit(p) - _logit(q)
    if not epsilon > 0:
        raise InvalidMechanismError(
            f"p(1-q) must exceed (1-p)q, got log-ratio {epsilon} for {p=}, {q=}"
        )
    return epsilon


def string_sensitivity(r: int, cfg: CodecConfig) -> SensitivityRecord:
    if r < 1:
        raise InvalidInputError(f"feature count must be at least 1, got {r}")
    return SensitivityRecord(r=r, l=cfg.l)


def analytic_log_ratio(spec: RandomizerSpec) -> float:
    """Log of the composed likelihood ratio, built pair by pair as the mechanism's bound is."""
    if not spec.mechanism.uses_alpha:
        raise ConfigurationError(
            f"{spec.mechanism.value} has no pairwise bound, use epsilon_from_pq instead"
        )
    probabilities = probabilities_for(spec)
    even_pair = _logit(probabilities.keep_one_even) + _logit(probabilities.keep_zero_even)
    odd_pair = _logit(probabilities.keep_one_odd) + _logit(probabilities.keep_zero_odd)
    if spec.mechanism is Mechanism.ALPHA_OUE:
        return even_pair * (spec.sensitivity / 2)
    return even_pair * (spec.sensitivity / 4) + odd_pair * (spec.sensitivity / 4)


def analytic_ratio(spec: RandomizerSpec) -> float:
    return math.exp(analytic_log_ratio(spec))


def compose_sequential(budgets: Sequence[PrivacyBudget]) -> PrivacyBudget:
    if not budgets:
        raise InvalidInputError("cannot compose an empty list of budgets")
    return PrivacyBudget(
        epsilon=math.fsum(budget.epsilon for budget in budgets),
        mechanism="sequential(" + ",".join(budget.mechanism for budget in budgets) + ")",
    )


def compose_parallel(budgets: Sequence[PrivacyBudget]) -> PrivacyBudget:
    if not budgets:
        raise InvalidInputError("cannot compose an empty list of budgets")
    widest = max(budgets, key=lambda budget: budget.epsilon)
    return PrivacyBudget(epsilon=widest.epsilon, mechanism=f"parallel({widest.mechanism})")


def protocol_budget(client_specs: Iterable[RandomizerSpec]) -> PrivacyBudget:
    """Budget of the whole protocol: clients randomize disjoint data once."""
    return compose_parallel(
        [PrivacyBudget(spec.epsilon, spec.mechanism.value) for spec in client_specs]
    )


def _audit_inputs(
    spec: RandomizerSpec, v1: BitString, v2: BitString
) -> tuple[np.ndarray, np.ndarray]:
    v1, v2 = check_bits(v1), check_bits(v2)
    if v1.ndim != 1 or v1.shape != v2.shape:
        raise PreconditionError(f"inputs must be equal-length bit strings, got {v1.shape} and {v2.shape}")
    if spec.sensitivity is not None and v1.shape[0] != spec.sensitivity:
        raise PreconditionError(
            f"inputs have {v1.shape[0]} bits but the spec declares sensitivity {spec.sensitivity}"
        )
    if v1.shape[0] > MAX_AUDIT_BITS:
        raise PreconditionError(f"audits enumerate outputs and allow at most {MAX_AUDIT_BITS} bits")
    if spec.mechanism is Mechanism.SPLIT_OUE and not is_split_balanced(v1, v2):
        raise PreconditionError("split-oue audits need swapped pairs spread evenly over S1 and S2")
    return v1, v2


def is_split_balanced(v1: BitString, v2: BitString) -> bool:
    """Differences form swapped (1, 0) pairs inside S1 and inside S2, as many in each."""
    v1 = np.asarray(v1, dtype=np.int64)
    v2 = np.asarray(v2, dtype=np.int64)
    pairs = []
    for parity in (0, 1):
        up = int(((v1[parity::2] == 0) & (v2[parity::2] == 1)).sum())
        down = int(((v1[parity::2] == 1) & (v2[parity::2] == 0)).sum())
        if up != down:
            return False
        pairs.append(up)
    return pairs[0] == pairs[1]


def balanced_pairs(d: int, split: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """All ordered pairs of d-bit strings with equal Hamming weight.

    With ``split`` the pair must also pass ``is_split_balanced``.
    """
    strings = [np.array(bits, dtype=np.uint8) for bits in itertools.product((0, 1), repeat=d)]
    pairs = []
    for v1, v2 in itertools.product(strings, repeat=2):
        if v1.sum() != v2.sum():
            continue
        if split and not is_split_balanced(v1, v2):
            continue
        pairs.append((v1, v2))
    return pairs


def _all_outputs(d: int) -> np.ndarray:
    codes = np.arange(1 << d)
    return ((codes[:, None] >> np.arange(d - 1, -1, -1)) & 1).astype(np.uint8)


def _output_log_probabilities(spec: RandomizerSpec, v: np.ndarray, outputs: np.ndarray) -> np.ndarray:
    one_if_one, one_if_zero = probabilities_for(spec).output_one_arrays(v.shape[0])
    p_one = np.where(v == 1, one_if_one, one_if_zero)
    with np.errstate(divide="ignore"):
        return np.where(outputs == 1, np.log(p_one), np.log1p(-p_one)).sum(axis=1)


def exact_audit(
    spec: RandomizerSpec, v1: BitString, v2: BitString, min_probability: float = 0.0
) -> AuditResult:
    """Closed-form audit over every output string.

    ``extremal_log_ratio`` is evaluated at output ``B = v1``, the pattern the
    pairwise bounds of the alpha mechanisms are built on. With
    ``min_probability`` the worst case only ranges over outputs at least that
    likely under both inputs, the outputs a Monte-Carlo audit can observe.
    """
    v1, v2 = _audit_inputs(spec, v1, v2)
    if not 0 <= min_probability < 1:
        raise PreconditionError(f"min_probability must lie in [0, 1), got {min_probability}")
    outputs = _all_outputs(v1.shape[0])
    first = _output_log_probabilities(spec, v1, outputs)
    second = _output_log_probabilities(spec, v2, outputs)
    with np.errstate(invalid="ignore"):
        log_ratio = first - second
    # nan marks outputs neither input can produce
    candidates = ~np.isnan(log_ratio)
    if min_probability > 0:
        floor = math.log(min_probability)
        candidates &= (first >= floor) & (second >= floor)
        if not candidates.any():
            raise PreconditionError(f"no output has probability {min_probability} under both inputs")
    extremal = int(v1.astype(np.int64) @ (1 << np.arange(v1.shape[0] - 1, -1, -1)))
    return AuditResult(
        worst_log_ratio=float(log_ratio[candidates].max()),
        extremal_log_ratio=float(log_ratio[extremal]),
    )


def _sample_counts(
    spec: RandomizerSpec, v: np.ndarray, trials: int, seed: streams.Seed, tag: int
) -> np.ndarray:
    probabilities = probabilities_for(spec)
    weights = 1 << np.arange(v.shape[0] - 1, -1, -1)
    counts = np.zeros(1 << v.shape[0], dtype=np.int64)
    for chunk, start in enumerate(range(0, trials, AUDIT_CHUNK)):
        size = min(AUDIT_CHUNK, trials - start)
        rng = streams.substream(seed, streams.AUDIT, tag, chunk)
        outputs = _perturb(np.broadcast_to(v, (size, v.shape[0])), probabilities, rng)
        counts += np.bincount(outputs @ weights, minlength=counts.shape[0])
    return counts


def empirical_epsilon(
    spec: RandomizerSpec,
    v1: BitString,
    v2: BitString,
    trials: int,
    seed: streams.Seed = 0,
    min_count: int = DEFAULT_MIN_COUNT,
) -> float:
    """Estimate max_Q ln(Pr[A(v1)=Q] / Pr[A(v2)=Q]).

    ``trials=0`` switches to exact enumeration from the closed-form bit
    probabilities. Otherwise outputs seen fewer than ``min_count`` times under
    either input are left out of the maximum.
    """
    v1, v2 = _audit_inputs(spec, v1, v2)
    if trials == 0:
        return exact_audit(spec, v1, v2).worst_log_ratio
    if trials < MIN_AUDIT_TRIALS:
        raise PreconditionError(f"Monte-Carlo audits need at least {MIN_AUDIT_TRIALS} trials, got {trials}")

    first = _sample_counts(spec, v1, trials, seed, 1)
    second = _sample_counts(spec, v2, trials, seed, 2)
    kept = (first >= min_count) & (second >= min_count)
    if not kept.any():
        logger.warning(f"no output reached {min_count} observations under both inputs")
        return 0.0
    return float(np.log(first[kept] / second[kept]).max())
