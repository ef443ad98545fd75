"""Deterministic random streams.

All randomness in this package flows through counter-based Philox
generators (``philox4x64-10`` as provided by ``numpy.random.Philox``),
keyed by ``(seed, stream_id)``. The same (seed, stream) pair therefore
reproduces the same draw sequence on any platform, and independent
stream ids give statistically independent streams from one user seed.
"""

from __future__ import annotations

import numpy as np

GENERATOR_NAME = "philox4x64-10"

# Fixed stream ids; reports record GENERATOR_NAME plus the user seed.
STREAM_SCENE = 1
STREAM_IMG_BRANCH = 2
STREAM_GEO_BRANCH = 3
STREAM_ROBUST = 4


def make_stream(seed: int, stream_id: int) -> np.random.Generator:
    """Generator for the given (seed, stream) pair."""
    key = np.array([seed, stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
