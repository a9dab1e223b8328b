"""Deterministic random-generator derivation.

Every stochastic step in the package draws from a generator obtained via
``rng_for(seed, label)``.  The label is hashed into the seed sequence, so
independent pipeline stages get independent streams from one root seed and
the stream for a stage never depends on how many draws other stages made.
"""

import hashlib

import numpy as np


def rng_for(seed, label):
    """Return a Generator derived from a root seed and an operation label.

    Args:
        seed: root integer seed.
        label: short string naming the consuming operation.

    Returns:
        np.random.Generator seeded by (seed, sha256(label)).
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    seq = np.random.SeedSequence([int(seed) & (2 ** 63 - 1)] + words)
    return np.random.default_rng(seq)
