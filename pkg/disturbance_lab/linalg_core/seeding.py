"""Seeded randomness: every random object is a pure function of (config, seed)."""
import numpy as np

from disturbance_lab.exceptions import ConfigurationError

SEED_MAX = 2 ** 64 - 1

# Independent streams derived from one master seed
STREAM_RESERVOIR = 0
STREAM_INPUT = 1
STREAM_TRAINING = 2
STREAM_DISTURBANCE = 3
STREAM_POWER_ITERATION = 4


def validate_seed(seed) -> int:
    try:
        value = int(seed)
    except (TypeError, ValueError):
        raise ConfigurationError(f"Seed must be an integer, got {seed!r}")
    if value < 0 or value > SEED_MAX:
        raise ConfigurationError(f"Seed must be a 64-bit unsigned integer, got {value}")
    return value


def make_rng(seed, stream: int = None) -> np.random.Generator:
    """Generator for ``seed``, optionally on an independent sub-stream."""
    seed = validate_seed(seed)
    if stream is None:
        return np.random.default_rng(np.random.SeedSequence(seed))
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(stream),)))


def derive_seed(seed, stream: int) -> int:
    """A 64-bit child seed, stable across numpy versions that keep SeedSequence."""
    seed = validate_seed(seed)
    state = np.random.SeedSequence(seed, spawn_key=(int(stream),)).generate_state(1, dtype=np.uint64)
    return int(state[0])
