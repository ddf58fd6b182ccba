"""Ordered thread-pool map; the degree of parallelism never changes results."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

THREADS_ENV = "AGG_DENSITY_THREADS"


def thread_count(threads=None) -> int:
    if threads is None:
        threads = os.environ.get(THREADS_ENV, "1")
    n = int(threads)
    if n < 1:
        raise ValueError("thread count must be >= 1")
    return n


def ordered_map(fn, items, threads=None) -> list:
    items = list(items)
    n = min(thread_count(threads), max(1, len(items)))
    if n == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
