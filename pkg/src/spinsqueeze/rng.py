"""Seeded random streams.

Every random draw in the package goes through a Philox counter-based
generator keyed by ``(seed, stream, index)``.  Disorder and trajectory
sampling use different stream ids, so changing the number of DTWA samples
never changes the graphs drawn for the samples that remain.
"""

import numpy as np

GRAPH_STREAM = 0
DTWA_STREAM = 1
SWEEP_STREAM = 2
BOOTSTRAP_STREAM = 3

_MASK64 = (1 << 64) - 1


def generator(seed, stream=GRAPH_STREAM, index=0):
    seed = int(seed) & _MASK64
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(int(stream), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(master, index, stream=SWEEP_STREAM):
    """64-bit child seed; a pure function of (master, stream, index)."""
    ss = np.random.SeedSequence(entropy=int(master) & _MASK64,
                                spawn_key=(int(stream), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
