"""Deterministic named random streams.

Every random draw in the package comes from a generator keyed by
``(master_seed, *key)``. numpy's SeedSequence hashes the key into an
independent stream, so results depend only on the key and never on the order
in which replications or particles are scheduled.
"""

import numpy as np

# Stream tags, always the first element of a key.
NOISE = 0
INITIAL = 1
REFERENCE_NOISE = 2
REFERENCE_INITIAL = 3

_MASK64 = (1 << 64) - 1


def seed_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    if master_seed < 0 or master_seed > _MASK64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    if any(k < 0 for k in key):
        raise ValueError(f"stream key components must be non-negative, got {key}")
    return np.random.SeedSequence(master_seed, spawn_key=tuple(int(k) for k in key))


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the generator for one named substream."""
    return np.random.Generator(np.random.PCG64(seed_sequence(master_seed, *key)))


def hurst_key(h: float) -> int:
    """Integer tag for a Hurst index, used inside stream keys."""
    return int(round(h * 1_000_000))
