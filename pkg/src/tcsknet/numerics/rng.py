"""Seedable counter-based random streams.

Philox is counter-based, so a stream is a pure function of its seed key:
the same (seed, *key) gives the same draws on any host, and disjoint keys
give statistically independent streams. Every stochastic op in the package
takes one of these generators explicitly; nothing draws from global state.
"""

import numpy as np


def new_rng(seed: int, *key: int) -> np.random.Generator:
    """Return a fresh Philox generator for (seed, *key).

    Extra key integers carve independent substreams out of one user-facing
    seed (e.g. shuffle/augment/dropout streams inside a training run).
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, key)])))
