"""
Reproducible random streams.

A run owns one master seed. Every consumer asks for a child stream labelled by its purpose
and an index (usually the training step), so streams never overlap and any step can be
replayed in isolation.
"""

from hashlib import blake2b
from typing import Union

import numpy as np

__all__ = ["child_rng", "as_generator", "label_key", "SeedLike"]

SeedLike = Union[int, np.random.Generator, None]


def label_key(label: str) -> int:
    """Stable 64-bit integer for a purpose label."""
    return int.from_bytes(blake2b(label.encode("utf-8"), digest_size=8).digest(), "little")


def child_rng(seed: int, label: str, index: int = 0) -> np.random.Generator:
    """
    Derive an independent generator for ``(seed, label, index)``.

    Args:
        seed (int): The master seed of the run.
        label (str): Purpose of the stream, e.g. ``"step"`` or ``"barycenter"``.
        index (int): Sub-stream index, e.g. the training step.

    Returns:
        np.random.Generator: A PCG64 generator seeded from the triple.
    """
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, label_key(label), int(index)])
    return np.random.Generator(np.random.PCG64(sequence))


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Accept an integer seed, an existing generator, or None."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
