"""Deterministic seed derivation.

One master seed drives an entire run.  Every consumer of randomness gets
its own generator derived from ``(master_seed, stream, index...)`` through
``numpy.random.SeedSequence`` spawn keys, so dataset ``k`` is reproducible
in isolation and ensembles can be generated in parallel in any order
without changing the results.

Stream ids used by the pipeline:

====  ==========================================
 0    telegraph trajectories / correlated pairs
 1    readout noise
 2    detection-threshold calibration ensembles
====  ==========================================
"""

from __future__ import annotations

import numpy as np

STREAM_TRAJECTORY = 0
STREAM_READOUT = 1
STREAM_CALIBRATION = 2


def child_sequence(master_seed: int, *key: int) -> np.random.SeedSequence:
    """SeedSequence for stream ``key`` of ``master_seed``.

    The same ``(master_seed, *key)`` always yields the same stream,
    and distinct keys yield statistically independent streams.
    """
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))


def rng_for(master_seed: int, *key: int) -> np.random.Generator:
    """Generator for stream ``key`` of ``master_seed``."""
    return np.random.default_rng(child_sequence(master_seed, *key))


def rng_from_seed(seed) -> np.random.Generator:
    """Generator from a bare seed int or an existing SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))
