# rng.py
"""Reproducible random streams.

Every draw comes from a Philox (counter-based) generator whose key is derived
from (seed, replica, purpose) through numpy's SeedSequence, so a replica's
output is a pure function of those three integers regardless of thread
scheduling or how many other replicas run.
"""
from enum import IntEnum

import numpy as np


class Purpose(IntEnum):
    BACKWARD = 0
    FORWARD = 1
    FORWARD_TRUNCATED = 2
    RANDOM_WALK = 3
    VERIFY = 4


def stream(seed: int, replica: int, purpose: Purpose) -> np.random.Generator:
    if seed < 0 or replica < 0:
        raise ValueError(f"seed and replica must be non-negative, got {seed}, {replica}")
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(replica), int(purpose)))
    key = seq.generate_state(2, dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def open_uniform(gen: np.random.Generator) -> float:
    """A uniform on the open interval (0, 1)."""
    u = gen.random()
    while u == 0.0:
        u = gen.random()
    return float(u)
