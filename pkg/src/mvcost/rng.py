"""Counter-based random streams.

Every draw comes from a Philox generator keyed by (seed, purpose, index), so
a chunk of trials sees the same numbers whether it runs first, last, or on
another thread. Distinct purposes never share a stream, which keeps
common-random-number comparisons between schemes meaningful.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

BRANCH = 0
CHANNEL_A = 1
CHANNEL_B = 2
CODEBOOK = 3
MESSAGE = 4
CALIBRATION = 5
CHECKS = 6

CHUNK = 4096


def stream(seed, purpose, index=0):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(purpose), int(index)))
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(trials, size=CHUNK):
    full, rest = divmod(int(trials), size)
    return [size] * full + ([rest] if rest else [])


def map_chunks(fn, trials, threads=1, size=CHUNK):
    """[fn(index, count) for each chunk], in chunk order."""
    sizes = chunk_sizes(trials, size)
    if threads <= 1 or len(sizes) == 1:
        return [fn(i, c) for i, c in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, range(len(sizes)), sizes))
