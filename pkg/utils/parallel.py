#!/usr/bin/env python3
"""
utils/parallel.py - Deterministic chunked thread-pool map

Work is split into chunks whose boundaries depend only on the problem size,
never on the thread count, so every chunk performs the same floating point
operations whatever the pool size. numpy releases the GIL inside its kernels,
which makes threads sufficient for the dense kernel sums.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Tuple, TypeVar

T = TypeVar("T")

DEFAULT_CHUNK = 256

_thread_count: Optional[int] = None


def set_thread_count(count: Optional[int]) -> None:
    """Set the pool size used by chunked_map (None = cpu count)"""
    global _thread_count
    _thread_count = count


def get_thread_count() -> int:
    """Current pool size"""
    if _thread_count is not None:
        return max(1, _thread_count)
    return os.cpu_count() or 1


def chunk_bounds(total: int, chunk: int = DEFAULT_CHUNK) -> List[Tuple[int, int]]:
    """Fixed [start, stop) chunk boundaries covering range(total)"""
    if total <= 0:
        return []
    chunk = max(1, chunk)
    return [(start, min(start + chunk, total)) for start in range(0, total, chunk)]


def chunked_map(func: Callable[[int, int], T], total: int,
                chunk: int = DEFAULT_CHUNK) -> List[T]:
    """Apply func(start, stop) over fixed chunks, results in chunk order"""
    bounds = chunk_bounds(total, chunk)
    threads = min(get_thread_count(), len(bounds))
    if threads <= 1:
        return [func(start, stop) for start, stop in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(func, start, stop) for start, stop in bounds]
        return [future.result() for future in futures]
