"""Deterministic random number generation.

Every stochastic step in the pipeline (data synthesis, splitting, weight
initialisation, dropout, SMO tie-breaking) draws from a :class:`SeededRng`
so that a run is fully determined by one 64-bit master seed.

The underlying bit generator is NumPy's PCG64.  It is part of the public
API of this package: changing it would silently change every "random"
result, so it must never be swapped without a major version bump.
"""

from __future__ import annotations

import numpy as np

_U64 = 2**64


def _derive(seed: int, index: int) -> int:
    """Hash (seed, index) into a new 64-bit seed via ``SeedSequence``."""
    seq = np.random.SeedSequence(entropy=[seed, index])
    return int(seq.generate_state(1, np.uint64)[0])


class SeededRng:
    """A PCG64 generator with hash-derived, statistically independent children.

    Parameters
    ----------
    seed : int
        Unsigned 64-bit master seed.

    Notes
    -----
    ``child(i)`` returns a new :class:`SeededRng` seeded with a hash of
    ``(seed, i)``.  Children never share state with the parent or with each
    other, which keeps parallel work reproducible: results depend only on
    which child index a task was given, not on execution order.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < _U64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))

    def child(self, index: int) -> "SeededRng":
        index = int(index)
        if index < 0:
            raise ValueError("child index must be non-negative")
        return SeededRng(_derive(self.seed, index))

    def __repr__(self):
        return f"SeededRng(seed={self.seed})"


def ensure_rng(seed) -> SeededRng:
    """Accept a seed integer, a SeededRng, or None (seed 0)."""
    if seed is None:
        return SeededRng(0)
    if isinstance(seed, SeededRng):
        return seed
    return SeededRng(seed)
