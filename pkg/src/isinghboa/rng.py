"""Seed derivation for independent, reproducible random streams."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(master: int, *labels: object) -> int:
    """Hash a master seed and a sequence of labels into a 64-bit seed."""
    text = "|".join([str(int(master))] + [str(label) for label in labels])
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def make_rng(master: int, *labels: object) -> np.random.Generator:
    """PCG64 generator for the stream named by ``labels``."""
    return np.random.Generator(np.random.PCG64(derive_seed(master, *labels)))
