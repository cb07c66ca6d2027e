"""Deterministic random-stream derivation.

Every stage derives its generators from one master seed plus a stage
label and integer indices, so partial reruns reproduce the same draws.
"""
import zlib

import numpy as np


def _stage_key(stage):
    return zlib.crc32(stage.encode("utf-8"))


def seed_sequence(seed, stage, *indices):
    """Return a ``SeedSequence`` keyed on ``(seed, stage, *indices)``."""
    if seed is None:
        raise ValueError("a seed is required; wall-clock seeding is not supported")
    key = (_stage_key(stage),) + tuple(int(i) for i in indices)
    return np.random.SeedSequence(int(seed), spawn_key=key)


def make_rng(seed, stage, *indices):
    """Return a ``numpy.random.Generator`` for the given substream."""
    return np.random.default_rng(seed_sequence(seed, stage, *indices))


def derive_seed(seed, stage, *indices):
    """Collapse a substream into a plain 63-bit integer seed."""
    state = seed_sequence(seed, stage, *indices).generate_state(2, dtype=np.uint32)
    return int((int(state[0]) << 31) ^ int(state[1]))
