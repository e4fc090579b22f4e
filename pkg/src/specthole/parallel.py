"""Bounded worker pool whose results come back in submission order."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def run_jobs(fn: Callable[[T], R], args: Iterable[T], jobs: int = 1) -> list[R]:
    """Map ``fn`` over ``args``; ``jobs > 1`` uses worker processes.

    Results are keyed by input position, never by completion order, so the
    output is identical for any ``jobs``.
    """
    args = list(args)
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=min(jobs, len(args))) as pool:
        return list(pool.map(fn, args))
