"""Counter-based random streams.

Every random draw in a simulation comes from a stream keyed by
``(seed, purpose, iteration, worker)``. Streams are built from a Philox
generator whose key is derived from that tuple, so a draw never depends on
the order in which other streams were consumed.
"""

from __future__ import annotations

import numpy as np

# stream purposes
BATCH = 0
DATA = 1
INIT = 2
EVAL = 3
SETUP = 4


def stream(seed: int, purpose: int, iteration: int = 0, worker: int = 0) -> np.random.Generator:
    """Return an independent generator for one (purpose, iteration, worker) cell."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(purpose, iteration, worker))
    return np.random.Generator(np.random.Philox(ss))
