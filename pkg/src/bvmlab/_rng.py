"""Seed handling.

Every stochastic routine takes ``seed`` as an int, a ``SeedSequence`` or an
existing ``Generator``; nothing ever touches global RNG state.
"""

from __future__ import annotations

import numpy as np


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise TypeError("an explicit seed is required")
    return np.random.default_rng(seed)


def spawn_generators(seed, count: int) -> list[np.random.Generator]:
    """Split ``seed`` into ``count`` independent generators."""
    if isinstance(seed, np.random.Generator):
        return list(seed.spawn(count))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in ss.spawn(count)]
