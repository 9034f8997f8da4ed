"""Counter-based random substreams keyed by (seed, index, ...)."""
from __future__ import annotations

import numpy as np


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``; schedule-independent."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def open_uniforms(rng: np.random.Generator, shape) -> np.ndarray:
    """Uniforms on the open interval (0, 1)."""
    u = rng.random(shape)
    return np.where(u > 0.0, u, 2.0 ** -54)


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed determined by ``(seed, *keys)``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0] >> np.uint64(1))
