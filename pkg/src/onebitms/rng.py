"""Deterministic random number generation.

Every stochastic component of the package draws from a Philox counter-based
generator keyed through ``numpy.random.SeedSequence``. Both algorithms are
documented and stable across platforms and numpy releases, so a (seed, tags)
pair reproduces the same stream everywhere. Derived streams use integer tags
rather than generator state so that results do not depend on call order.
"""

import numpy as np

_TAG_SPACE = {
    "data": 1,
    "test": 2,
    "ensemble": 3,
    "pairs": 4,
    "width": 5,
    "trial": 6,
}


def rng_for(seed, *tags):
    """Return a Generator keyed by ``seed`` and a tuple of integer/str tags."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for tag in tags:
        if isinstance(tag, str):
            entropy.append(_TAG_SPACE[tag])
        else:
            entropy.append(int(tag) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
