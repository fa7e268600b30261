"""Deterministic RNG derivation so nested loops never share a stream."""

import numpy as np


def seed_for(base: int, *key) -> np.random.SeedSequence:
    """Derive an independent seed sequence from a base seed and a key path.

    Non-integer key parts (e.g. phase names) are hashed into stable ints so
    ("train", epoch, step) style keys work.
    """
    parts = []
    for k in key:
        if isinstance(k, (int, np.integer)):
            parts.append(int(k) & 0xFFFFFFFF)
        else:
            h = 2166136261
            for ch in str(k).encode():
                h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
            parts.append(h)
    return np.random.SeedSequence(entropy=int(base), spawn_key=tuple(parts))


def derive_rng(base: int, *key) -> np.random.Generator:
    return np.random.default_rng(seed_for(base, *key))
