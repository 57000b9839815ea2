"""Named random substreams derived from a single integer seed.

Every consumer asks for ``substream(seed, "name", i, ...)``; the name is hashed
to an integer so that adding a new consumer never shifts existing streams.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode("utf-8"))


def substream(seed, *names):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *(_key(n) for n in names)])
