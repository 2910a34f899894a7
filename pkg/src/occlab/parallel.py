"""Order-preserving map over work items, serial or across processes.

Every work item derives its own random stream from its index, so the result
of :func:`indexed_map` does not depend on the number of workers.
"""
from __future__ import annotations

import multiprocessing as mp


def indexed_map(fn, items, workers: int = 1) -> list:
    items = list(items)
    if workers is None or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    ctx = mp.get_context("fork")
    with ctx.Pool(min(workers, len(items))) as pool:
        return pool.map(fn, items, chunksize=1)
