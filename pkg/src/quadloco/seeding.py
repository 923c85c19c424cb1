"""Deterministic RNG stream derivation.

One global seed fully determines every stream in a run. Streams are
derived by seeding a PCG64 generator from ``SeedSequence([seed, *ids])``,
so (seed, stream ids) -> generator is a pure function and independent
streams never overlap.
"""

from __future__ import annotations

import numpy as np

# Stable stream ids. New ids must be appended, never renumbered, or
# fixed-seed runs stop being reproducible across versions.
STREAM_TERRAIN = 0
STREAM_EPISODE = 1
STREAM_NOISE = 2
STREAM_COMMAND = 3
STREAM_CURRICULUM = 4
STREAM_ACTION = 5
STREAM_INIT = 6
STREAM_EVAL = 7
STREAM_SHUFFLE = 8


def rng_stream(seed: int, *ids: int) -> np.random.Generator:
    """Return the PCG64 generator for (seed, ids)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, ids)])))
