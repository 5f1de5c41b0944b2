"""Deterministic random-number streams.

Every stochastic routine takes a master seed plus a tuple of integer indices
(stage, realization, ...) and builds its own independent generator from them.
Results are then reproducible bit for bit regardless of execution order or
worker count.
"""

import numpy as np


def substream(master_seed: int, *indices: int) -> np.random.Generator:
    """Generator for the stream keyed by (master_seed, *indices).

    The same key always yields the same stream; distinct keys give
    statistically independent streams.
    """
    return np.random.default_rng(np.random.SeedSequence((master_seed,) + indices))
