"""Deterministic random streams derived from one root seed.

Every subsystem draws from its own generator, keyed by a string label, so
adding or removing consumers never perturbs the others.
"""
from __future__ import annotations

import zlib

import numpy as np


def rng_for(seed: int, label: str) -> np.random.Generator:
    """Generator for (seed, label); same pair always gives the same stream."""
    entropy = [int(seed) & 0xFFFFFFFF, zlib.crc32(label.encode("utf-8"))]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
