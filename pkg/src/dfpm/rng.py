"""Named, reproducible random substreams.

Every random choice in the package flows from a single integer seed
through a named substream, so components stay independently reproducible
(resampling negatives does not disturb splits, and so on). Names are
hashed with SHA-256 rather than ``hash()`` so streams are stable across
processes and platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _digest(parts: tuple) -> list[int]:
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    d = h.digest()
    return [int.from_bytes(d[i : i + 4], "little") for i in range(0, 16, 4)]


def named_rng(seed: int, *names) -> np.random.Generator:
    """Generator for the substream identified by ``names`` under ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + _digest(names)))


def derive_seed(seed: int, *names) -> int:
    """A plain integer seed for the substream, for APIs that take one."""
    return int(named_rng(seed, *names).integers(0, 2**63 - 1))
