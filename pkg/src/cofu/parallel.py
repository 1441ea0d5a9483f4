"""Order-preserving task map over a process pool.

Results always come back in submission order, so any reduction done by the
caller sees the same sequence whatever the worker count.
"""

from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        threads = int(os.environ.get("COFU_THREADS", "1"))
    if threads < 1:
        raise ValueError("thread count must be at least 1")
    return threads


def pmap(fn, items, threads: int | None = 1) -> list:
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=min(threads, len(items)), mp_context=ctx) as pool:
        return list(pool.map(fn, items))
