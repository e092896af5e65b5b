"""Deterministic RNG substreams.

Every random draw in the package flows from one master seed. A substream is
addressed by a path of small integers (purpose constant, step, layer, head,
...) and realized as ``default_rng(SeedSequence(seed, spawn_key=path))``, so
streams are statistically independent, reproducible, and safe to hand to
concurrent consumers without shared state.

Within one generator, consumption order is part of the contract of whoever
owns it (e.g. ``head_forward`` documents the order of its draws).
"""

from __future__ import annotations

import numpy as np

# Purpose constants for the first path element.
STREAM_INIT = 0
STREAM_TASK = 1
STREAM_FORWARD = 2
STREAM_EVAL = 3
STREAM_TEST = 4


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the substream addressed by ``path`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.default_rng(ss)
