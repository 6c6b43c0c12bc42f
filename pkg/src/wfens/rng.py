"""Counter-based random substreams and a deterministic block map.

Every random draw belongs to a fixed-size block; block ``k`` of a run seeded
with ``seed`` always uses ``Philox`` keyed by ``SeedSequence(seed,
spawn_key=(k,))``.  Results therefore depend only on (seed, block index),
never on how blocks are distributed over workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK_SIZE = 4096

T = TypeVar("T")


def substream(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.Philox(rng))


def block_sizes(total: int, block: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(int(total), block)
    return [block] * full + ([rest] if rest else [])


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("WFENS_WORKERS", "1"))
    return max(1, int(workers))


def map_blocks(fn: Callable[[int, int], T], sizes: Sequence[int], workers: int = 1) -> list[T]:
    """Evaluate ``fn(block_index, block_size)`` for each block, results in block order."""
    jobs = list(enumerate(sizes))
    if workers <= 1 or len(jobs) <= 1:
        return [fn(k, n) for k, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda kn: fn(*kn), jobs))
