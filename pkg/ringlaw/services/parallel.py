"""
Bounded thread-pool helpers shared by the grid and sampling routes
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def resolve_workers(threads: int) -> int:
    """0 means one worker per CPU"""
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def ordered_map(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Apply func to every item, returning results in input order

    Output is identical for any worker count as long as func is pure.
    """
    items = list(items)
    workers = min(resolve_workers(threads), max(len(items), 1))
    if workers == 1:
        return [func(item) for item in items]
    logger.debug(f"Mapping {len(items)} items over {workers} threads")
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
