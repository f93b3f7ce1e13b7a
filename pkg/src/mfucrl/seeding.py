"""Deterministic derivation of random generators from one master seed.

Every source of randomness in a run is a `numpy` Generator derived from the
master seed plus a fixed integer path, so results do not depend on evaluation
order or parallel scheduling.  The scheme is counter based:

    rng = derive_rng(master_seed, STREAM_X, counter, ...)

where the first path element is one of the ``STREAM_*`` constants below and
the remaining elements are loop counters (episode index, particle block, ...).
Identical ``(master_seed, path)`` always yields an identical generator.
"""

from __future__ import annotations

import numpy as np

# Stream identifiers.  Never renumber: recorded runs depend on them.
STREAM_SAMPLE = 1       # inverse-CDF sampling from a grid distribution
STREAM_PARTICLES = 2    # particle simulations of the mean-field system
STREAM_PLANNER = 3      # cross-entropy population sampling
STREAM_COLLECT = 4      # transition collection during an episode
STREAM_BENCHMARK = 5    # known-dynamics benchmark planning
STREAM_EPISODE = 6      # per-episode planner seeds


def seed_sequence(master_seed, *path: int) -> np.random.SeedSequence:
    """SeedSequence for ``(master_seed, path)``; pure and collision-resistant.

    ``master_seed`` may itself be an ``(int, *path)`` tuple, in which case the
    extra path elements are prepended; this lets callers thread a derived seed
    through an API that appends its own counters.
    """
    if isinstance(master_seed, tuple):
        master_seed, path = master_seed[0], tuple(master_seed[1:]) + tuple(path)
    return np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(p) for p in path))


def derive_rng(master_seed, *path: int) -> np.random.Generator:
    """Generator seeded from the master seed and an integer path."""
    return np.random.default_rng(seed_sequence(master_seed, *path))
