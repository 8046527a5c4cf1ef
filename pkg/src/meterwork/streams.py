"""Reproducible stream-partitioned sampling.

A root seed plus a stream index determines a counter-based generator
(Philox) independently of how streams are assigned to workers, so estimators
produce bit-identical results at any thread count. Samples are partitioned
into fixed-size blocks; block -> stream assignment never depends on the
worker pool.

Inverse-CDF sampling over discrete outcomes uses a fixed outcome order and
resolves ties at CDF boundaries to the lower index.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

__all__ = [
    "STREAM_BLOCK",
    "THREADS_ENV_VAR",
    "stream_generator",
    "stream_blocks",
    "draw_index",
    "draw_indices",
    "map_streams",
    "resolve_workers",
]

STREAM_BLOCK = 4096
THREADS_ENV_VAR = "METERWORK_THREADS"

T = TypeVar("T")


def stream_generator(seed: int, stream_id: int) -> np.random.Generator:
    """Counter-based generator for one stream, derived only from (seed, stream)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def stream_blocks(n_total: int, block: int = STREAM_BLOCK) -> list[tuple[int, int, int]]:
    """Partition [0, n_total) into (stream_id, start, count) blocks."""
    if n_total < 0:
        raise ValueError(f"sample count must be nonnegative, got {n_total}")
    out = []
    stream = 0
    start = 0
    while start < n_total:
        count = min(block, n_total - start)
        out.append((stream, start, count))
        stream += 1
        start += count
    return out


def cdf_of(probs: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(np.asarray(probs, dtype=float))
    cdf[-1] = 1.0  # guard the top edge against rounding
    return cdf

# A draw of exactly 0.0 must not land in a zero-width leading segment.
_U_FLOOR = 1e-300


def draw_index(cdf: np.ndarray, u: float) -> int:
    """First index whose CDF value reaches u (ties resolve to the lower index)."""
    return int(np.searchsorted(cdf, max(u, _U_FLOOR), side="left"))


def draw_indices(cdf: np.ndarray, us: np.ndarray) -> np.ndarray:
    return np.searchsorted(cdf, np.maximum(us, _U_FLOOR), side="left")


def resolve_workers(workers: int | None = None) -> int:
    """Explicit worker count, else the environment override, else 1."""
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return 1


def map_streams(
    fn: Callable[[tuple[int, int, int]], T],
    blocks: Sequence[tuple[int, int, int]],
    workers: int | None = None,
) -> list[T]:
    """Apply `fn` to every block, in block order, on `workers` threads.

    Results are collected in block order, so the output is independent of
    the worker count.
    """
    nworkers = resolve_workers(workers)
    if nworkers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=nworkers) as pool:
        return list(pool.map(fn, blocks))
