"""Ordered thread-pool map used by the query loops.

The worker count comes from the ``workers`` argument, else from the
``NSLET_THREADS`` environment variable, else the CPU count.  Results are returned in
input order, so reductions are identical for any worker count.
"""
import os
from concurrent.futures import ThreadPoolExecutor


def worker_count(workers=None):
    if workers is None:
        env = os.environ.get("NSLET_THREADS", "").strip()
        workers = int(env) if env else (os.cpu_count() or 1)
    workers = int(workers)
    if workers < 1:
        raise ValueError(f"worker count must be >= 1, got {workers}")
    return workers


def ordered_map(fn, items, workers=None):
    items = list(items)
    n = worker_count(workers)
    if n == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
