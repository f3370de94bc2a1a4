"""Deterministic named random substreams.

Every stochastic operation in the package takes an explicit 64-bit seed.
The CLI derives one substream per module call from its single seed, so the
draws of one command never shift when another command is added.
"""

import hashlib

import numpy as np


def substream(seed, label):
    """Generator for the ``label`` substream of ``seed``.

    The label is hashed so that stream identity depends only on the string,
    not on registration order.
    """
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "big")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), key]))
