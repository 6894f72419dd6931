"""Seeded random number generation.

All stochastic routines in this package draw from numpy's PCG64 generator
and take an explicit seed.  Experiment drivers derive independent streams
from one root seed and a tuple of integer counters (trial index, link
indices, ...) so that results are reproducible regardless of execution
order or worker count.
"""

from __future__ import annotations

import numpy as np


def derive_rng(root_seed: int, *counters: int) -> np.random.Generator:
    """Return a generator keyed by ``(root_seed, *counters)``.

    The same key always yields the same stream; distinct keys yield
    statistically independent streams (SeedSequence hashing).
    """
    entropy = [int(root_seed)] + [int(c) for c in counters]
    return np.random.default_rng(np.random.SeedSequence(entropy))
