"""Deterministic random streams derived from one root seed.

Every random choice in the workbench draws from a named substream so that a
single root seed fixes the whole run while unrelated components stay
decoupled (reordering SMOTE draws never changes weight init, etc.).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _stable_hash64(text: str) -> int:
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def named_rng(root_seed: int, *names: str | int) -> np.random.Generator:
    """Generator for the substream identified by `names` under `root_seed`.

    The same (seed, names) pair always yields the same stream, on any
    platform; distinct names yield independent streams.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF]
    for name in names:
        entropy.append(_stable_hash64(str(name)))
    return np.random.default_rng(entropy)
