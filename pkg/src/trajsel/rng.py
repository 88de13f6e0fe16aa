"""Deterministic, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by a tuple of
integers, so that e.g. ``stream("run", seed)`` and ``stream("branch", seed,
alg)`` never collide and can be recreated anywhere.
"""

import zlib

import numpy as np

__all__ = ["stream", "name_key"]


def name_key(name):
    """Stable 32-bit integer for a stream label."""
    return zlib.crc32(name.encode("utf-8"))


def stream(name, *keys):
    """Return a fresh generator for the stream ``name`` keyed by ``keys``."""
    entropy = [name_key(name)] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
