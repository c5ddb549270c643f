"""Seeding.

Disorder draws use numpy's Philox generator keyed by a SeedSequence, so any
(master seed, task key) pair gives an independent, reproducible stream.
Monte Carlo kernels carry one splitmix64 counter per replica in a uint64
array; the array is the whole generator state and goes into checkpoints
as is.
"""
from __future__ import annotations

import numpy as np
from numba import njit

ALGORITHM = "philox4x64 (disorder) + splitmix64 (Metropolis)"


def make_generator(seed, *key) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed, *key) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def stream_states(seed, n: int, *key) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return ss.generate_state(n, np.uint64)


@njit(cache=True, inline="always")
def next_uniform(state, i):
    """Advance replica i's splitmix64 counter and return a double in [0, 1)."""
    z = state[i] + np.uint64(0x9E3779B97F4A7C15)
    state[i] = z
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * (1.0 / 9007199254740992.0)
