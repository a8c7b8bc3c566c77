"""Seeded random streams.

A single master seed is split into named streams ("init", "sample",
"augment", "dropout", "data"), and each stream can additionally be
indexed by iteration. Indexed streams make mid-run resume reproducible:
iteration i always sees the same random numbers no matter where the run
started.
"""

import numpy as np

_STREAMS = {"init": 0, "sample": 1, "augment": 2, "dropout": 3, "data": 4}


def stream_rng(seed, stream, index=None):
    """Generator for a named stream, optionally indexed (per iteration/item)."""
    key = _STREAMS[stream]
    entropy = (int(seed), key) if index is None else (int(seed), key, int(index))
    return np.random.default_rng(np.random.SeedSequence(entropy))
