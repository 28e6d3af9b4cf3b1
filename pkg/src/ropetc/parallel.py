"""Deterministic parallel map that keeps depth traces faithful.

Each item runs in its own branch trace; branches are merged level by
level in item order, so neither results nor traces depend on the worker
count or on scheduling.
"""

from __future__ import annotations

import contextvars
import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence, TypeVar

from .depth_accountant import CostTrace, _ACTIVE

T = TypeVar("T")
R = TypeVar("R")

ENV_THREADS = "ROPETC_THREADS"

_THREADS: contextvars.ContextVar[int | None] = contextvars.ContextVar("ropetc_threads", default=None)
_IN_WORKER: contextvars.ContextVar[bool] = contextvars.ContextVar("ropetc_in_worker", default=False)


def thread_count() -> int:
    n = _THREADS.get()
    if n is None:
        n = int(os.environ.get(ENV_THREADS, "1") or 1)
    return max(1, n)


@contextmanager
def threads(n: int) -> Iterator[None]:
    if n < 1:
        raise ValueError("thread count must be positive")
    token = _THREADS.set(n)
    try:
        yield
    finally:
        _THREADS.reset(token)


def _run_branch(fn: Callable[[T], R], item: T, traced: bool) -> tuple[R, CostTrace | None]:
    _IN_WORKER.set(True)
    if not traced:
        return fn(item), None
    branch = CostTrace()
    _ACTIVE.set(branch)
    return fn(item), branch


def parallel_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    parent = _ACTIVE.get()
    traced = parent is not None
    n = thread_count()
    if n == 1 or _IN_WORKER.get() or len(items) < 2:
        outcomes = [contextvars.copy_context().run(_run_branch, fn, it, traced) for it in items]
    else:
        with ThreadPoolExecutor(max_workers=n) as pool:
            futures = [
                pool.submit(contextvars.copy_context().run, _run_branch, fn, it, traced)
                for it in items
            ]
            outcomes = [f.result() for f in futures]
    if traced:
        parent.merge_parallel(b for _, b in outcomes)
    return [r for r, _ in outcomes]
