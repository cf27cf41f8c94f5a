"""Named, counter-keyed random streams.

Every random draw in the package comes from a generator keyed by
(seed, stream id, *path), where path entries are non-negative integers such
as (epoch, iteration, slot, view). Benefits over one mutable generator:

- reproducibility does not depend on draw order across subsystems, so
  e.g. augmentation draws stay identical whether or not temporal pair
  sampling consumed randomness first;
- checkpoint resume needs no serialized generator state, only the seed and
  the epoch counter;
- data loading may run ahead or in parallel without changing the trace.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

# Stable stream ids. Never renumber: checkpoints and frozen test values
# depend on them.
STREAMS = {
    "params": 0,     # encoder weight init (query encoder; key starts as a copy)
    "head": 1,       # reserved for head init schemes that draw randomness
    "order": 2,      # per-epoch area shuffling
    "pair": 3,       # temporal pair sampling
    "aug": 4,        # augmentation draws
    "split": 5,      # train/holdout area splits
    "synth": 6,      # synthetic dataset generation
    "probe": 7,      # reserved
}


def stream_rng(seed: int, stream: str, *path: int) -> np.random.Generator:
    """Return a fresh Generator for (seed, stream, *path)."""
    if stream not in STREAMS:
        raise ConfigurationError(f"unknown rng stream {stream!r}")
    seed = int(seed)
    if seed < 0:
        raise ConfigurationError("seed must be a non-negative integer")
    key = [seed, STREAMS[stream]]
    for p in path:
        p = int(p)
        if p < 0:
            raise ConfigurationError("rng stream path entries must be non-negative")
        key.append(p)
    return np.random.default_rng(np.random.SeedSequence(key))
