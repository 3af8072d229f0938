"""Deterministic random-stream management.

Every stochastic component draws from its own named substream so that adding
or removing one component (say, a domain head) never perturbs the draws seen
by another (say, the batch shuffler).  This is what makes the bit-exact
trajectory-equality guarantees between trainers possible.
"""

import hashlib

import numpy as np


def substream(seed: int, role: str) -> np.random.Generator:
    """Return an independent generator for (seed, role).

    The role string is folded into the seed material through SHA-256, so the
    mapping is stable across platforms and Python processes (unlike ``hash``).
    """
    digest = hashlib.sha256(role.encode("utf-8")).digest()
    salt = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, salt])))
