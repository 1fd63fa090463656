"""Named random streams derived from a single integer seed.

Every stochastic consumer asks for a stream by label (``"smote/run3/p017"``)
so results do not depend on the order in which consumers run.
"""

import hashlib

import numpy as np


def _label_words(label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def stream(seed: int, label: str) -> np.random.Generator:
    """Return an independent generator for ``label`` under ``seed``."""
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be non-negative")
    words = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF] + _label_words(label)
    return np.random.default_rng(np.random.SeedSequence(words))


def child_seed(seed: int, label: str) -> int:
    """Derive a 63-bit integer seed for ``label``; useful for nesting."""
    return int(stream(seed, label).integers(0, 2**63 - 1))
