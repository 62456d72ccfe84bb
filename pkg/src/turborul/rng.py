"""Named, seeded random streams.

Every consumer of randomness (weight init, dropout masks, batch shuffling,
boosting subsamples) draws from its own stream keyed by ``(seed, label)``.
Streams use the counter-based Philox generator, so draws are independent
of each other, of call order, and of the platform.
"""
import hashlib

import numpy as np


def _label_words(label):
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def stream(seed, label):
    """Return a fresh ``numpy.random.Generator`` for ``(seed, label)``."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    seq = np.random.SeedSequence([seed & 0xFFFFFFFF, seed >> 32, *_label_words(label)])
    return np.random.Generator(np.random.Philox(seq))
