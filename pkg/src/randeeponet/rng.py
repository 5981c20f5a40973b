"""Seeded random streams.

Every consumer of randomness derives its own generator from a master seed and a
fixed key, so that e.g. runs that differ only in ``n_eval`` start from the same
initial parameters and see the same shuffles::

    substream(seed, INIT)                  # parameter initialization
    substream(seed, SHUFFLE, epoch)        # per-epoch permutation
    substream(seed, SELECT, epoch, batch)  # per-iteration evaluation points
    substream(seed, SPLIT)                 # training-subset selection
    substream(seed, FIELD, sample)         # one GP draw per sample index

Keys map onto ``numpy.random.SeedSequence(seed, spawn_key=key)`` feeding a
PCG64 bit generator, so streams are independent of the order they are created.
"""
from __future__ import annotations

import numpy as np

INIT = 0
SHUFFLE = 1
SELECT = 2
SPLIT = 3
FIELD = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))
