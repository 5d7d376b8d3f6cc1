"""Chunked, order-preserving parallel map over sample indices.

Work is split into fixed-size index chunks that do not depend on the
worker count, and results come back in chunk order, so any reduction the
caller performs is bitwise identical for 1 or 64 workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

DEFAULT_CHUNK = 128


def chunk_bounds(n_items: int, chunk_size: int = DEFAULT_CHUNK):
    return [(lo, min(lo + chunk_size, n_items)) for lo in range(0, n_items, chunk_size)]


def resolve_workers(workers) -> int:
    if workers is None or workers == 0:
        return max(1, os.cpu_count() or 1)
    return max(1, int(workers))


def chunked_map(fn, n_items: int, args=(), workers: int = 1, chunk_size: int = DEFAULT_CHUNK):
    """Return ``[fn(lo, hi, *args) for each chunk]`` in chunk order."""
    bounds = chunk_bounds(n_items, chunk_size)
    workers = min(resolve_workers(workers), max(1, len(bounds)))
    if workers == 1:
        return [fn(lo, hi, *args) for lo, hi in bounds]
    los = [b[0] for b in bounds]
    his = [b[1] for b in bounds]
    extra = [[a] * len(bounds) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, los, his, *extra))


def concat(parts):
    return np.concatenate(parts) if parts else np.empty(0)
