"""Deterministic named RNG substreams.

A single experiment seed fans out into independent streams keyed by short
labels (plus optional integer indices), so corpus generation, model fitting,
policy init and rollouts can each be varied without disturbing the others.
crc32 keeps the label hashing stable across platforms and interpreter runs.
"""

import zlib

import numpy as np


def named_rng(seed, *scope):
    """Generator for the substream identified by (seed, *scope).

    scope entries may be strings or integers; the same tuple always yields
    the same stream.
    """
    words = [int(seed)] + [zlib.crc32(str(part).encode("utf-8")) for part in scope]
    return np.random.default_rng(np.random.SeedSequence(words))
