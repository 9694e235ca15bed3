"""Named random sub-streams derived from one integer seed."""

import zlib

import numpy as np

STREAMS = ("init", "shuffle", "dropout", "reinforce", "split", "data")


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; identical for identical (seed, name)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))
