"""Deterministic stream derivation for counter-based random number generation.

Every random quantity in the package is drawn from a Philox (counter-based)
generator keyed by a SeedSequence over (user seed, stream tag, indices...),
so results are pure functions of the seed material and never depend on call
order or on how much randomness other components consumed.
"""

import numpy as np

# Stream tags keep independent purposes from colliding on the same seed.
STREAM_NOISE = 1
STREAM_MASK = 2
STREAM_PAIRS = 3
STREAM_FIELD = 4


def _entropy(parts):
    return [int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]


def generator(*parts) -> np.random.Generator:
    """Counter-based generator keyed by the given integer parts."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(parts))))


def derive_seed(*parts) -> int:
    """Collapse integer parts into a single 64-bit sub-seed."""
    ss = np.random.SeedSequence(_entropy(parts))
    return int(ss.generate_state(1, np.uint64)[0])
