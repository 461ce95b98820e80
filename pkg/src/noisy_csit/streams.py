"""Reproducible random streams.

Work is cut into fixed-size chunks and every chunk owns a Philox stream
derived from ``(seed, purpose, chunk_index)``. Results therefore depend only
on the seed and the chunk size, never on how many workers process chunks.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

GENERATOR_NAME = "numpy.random.Philox (SeedSequence spawn_key per chunk)"
CHUNK_SIZE = 1 << 16

# purpose tags keep channel draws and feedback bit flips independent
CHANNEL = 0
FEEDBACK = 1
MAPPING = 2


def generator(seed, purpose, chunk=0, *sub):
    """Philox stream for ``(seed, purpose, chunk, *sub)``."""
    key = (int(purpose), int(chunk)) + tuple(int(s) for s in sub)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(n, chunk_size=CHUNK_SIZE):
    full, rest = divmod(int(n), chunk_size)
    sizes = [chunk_size] * full
    if rest:
        sizes.append(rest)
    return sizes


def map_chunks(fn, n, workers=1, chunk_size=CHUNK_SIZE):
    """Call ``fn(chunk_index, size)`` over all chunks; results come back in chunk order."""
    jobs = list(enumerate(chunk_sizes(n, chunk_size)))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(i, size) for i, size in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))
