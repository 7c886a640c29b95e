"""Seeded random substreams and an order-preserving worker pool."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Counted symbols per Monte Carlo block. Fixed so results never depend on the
# number of workers.
BLOCK_SYMBOLS = 10_000

# Stream tags keep independent consumers of one seed apart.
STREAM_LINK = 1
STREAM_CALIBRATION = 2
STREAM_GRID_HOLDOUT = 3
STREAM_RELAY = 4
STREAM_REGIONS = 5
STREAM_AF = 6


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for (seed, key...). Same inputs, same stream, on any machine."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def block_sizes(n_symbols: int, block: int = BLOCK_SYMBOLS) -> List[int]:
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    full, rest = divmod(n_symbols, block)
    return [block] * full + ([rest] if rest else [])


def map_jobs(fn: Callable[[T], R], jobs: Sequence[T], workers: int = 1) -> List[R]:
    """Run fn over jobs, results in job order. fn must be picklable for workers > 1."""
    jobs = list(jobs)
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(fn, jobs))


def star(args):
    fn, rest = args[0], args[1:]
    return fn(*rest)


def starmap_jobs(fn: Callable[..., R], arg_tuples: Iterable[tuple], workers: int = 1) -> List[R]:
    return map_jobs(star, [(fn, *a) for a in arg_tuples], workers)
