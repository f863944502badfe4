"""Deterministic random substreams.

Every random draw in the package goes through a generator derived from the
master seed plus a key path, so reruns are bit-identical and no two concerns
share a stream.
"""

import numpy as np

# stream tags, the first element of every key path
INIT = 1
SELECT = 2
TRAIN = 3
PARTITION = 4
SPLIT = 5
RANDOMIZE = 6
AUDIT = 7
EXTRACTOR = 8
SYNTH = 9

Seed = int | np.random.SeedSequence


def substream_seed(seed: Seed, *keys: int) -> np.random.SeedSequence:
    """Child seed sequence for ``keys`` under ``seed``.

    ``substream_seed(s, 3, 1)`` is the same sequence as
    ``SeedSequence(s).spawn(...)`` would give at spawn key ``(3, 1)``.
    """
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            entropy=seed.entropy, spawn_key=(*seed.spawn_key, *keys)
        )
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys))


def substream(seed: Seed, *keys: int) -> np.random.Generator:
    return np.random.default_rng(substream_seed(seed, *keys))


def as_generator(seed: Seed | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
