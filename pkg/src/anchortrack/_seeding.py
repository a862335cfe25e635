"""Splittable seeding: one integer seed fans out into independent streams."""

from __future__ import annotations

import zlib

import numpy as np


def _tag_key(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag)
    return zlib.crc32(str(tag).encode())


def derive_rng(seed: int, *tags) -> np.random.Generator:
    """Return a generator keyed on ``seed`` plus any number of str/int tags.

    Streams with different tags are statistically independent; identical
    arguments always give the same stream.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_key(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
