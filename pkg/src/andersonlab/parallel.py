"""Ordered map over independent realization tasks."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, optionally spread over worker processes.

    Results always come back in input order, so any reduction performed on
    them is independent of the worker count.  ``fn`` must be picklable when
    ``workers > 1``.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    workers = min(workers, len(items))
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
