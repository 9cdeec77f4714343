"""Deterministic derivation of independent random streams.

All Monte Carlo work in this package draws from counter-based Philox
streams keyed by a master seed plus a tuple of purpose tags (segment
index, trial index, sample size, ...).  Streams with distinct tags are
independent, and every stream is reproducible across platforms and
worker counts.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(master_seed: int, *tags) -> int:
    """128-bit key for the (master_seed, *tags) stream."""
    material = repr((int(master_seed),) + tuple(tags)).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:16], "little")


def derive_rng(master_seed: int, *tags) -> np.random.Generator:
    """Counter-based generator for the (master_seed, *tags) stream."""
    return np.random.Generator(np.random.Philox(key=derive_key(master_seed, *tags)))
