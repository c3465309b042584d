"""Deterministic per-point parallelism.

Work items are independent and results are committed into slots keyed by
item order, so outputs are identical for every worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def parallel_map(fn, items, threads=1):
    """Apply ``fn`` to each item, preserving order; threads > 1 fans out."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    out = [None] * len(items)

    def run(k):
        out[k] = fn(items[k])

    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(run, range(len(items))))
    return out
