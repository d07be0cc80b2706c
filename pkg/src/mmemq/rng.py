# Named, independent random streams derived from one master seed.
from __future__ import annotations

import hashlib

import numpy as np


def _label_entropy(label: str) -> int:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "big")


def stream(master_seed: int, label: str) -> np.random.Generator:
    """Generator for one named consumer.

    Streams with different labels are statistically independent, and adding
    a new consumer label never perturbs the draws of existing ones.
    """
    ss = np.random.SeedSequence([int(master_seed), _label_entropy(label)])
    return np.random.default_rng(ss)


class StreamSet:
    """Lazy registry of named streams under a single master seed."""

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, label: str) -> np.random.Generator:
        if label not in self._streams:
            self._streams[label] = stream(self.master_seed, label)
        return self._streams[label]
