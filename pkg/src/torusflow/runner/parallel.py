"""Sample-parallel map for experiments; the worker count never changes a result."""
from __future__ import annotations

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager

ENV_WORKERS = "TORUSFLOW_WORKERS"


def worker_count(env=None) -> int:
    raw = (os.environ if env is None else env).get(ENV_WORKERS, "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{ENV_WORKERS} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{ENV_WORKERS} must be a positive integer, got {n}")
    return n


def serial_map(fn, items):
    return [fn(x) for x in items]


@contextmanager
def worker_pool(workers: int | None = None):
    """Yields map(fn, items) -> list.

    Work is always cut into the same chunks by the caller and results come back in
    input order, so a pool and the serial map produce identical numbers.  Workers
    run their chunk serially (no nested pools).
    """
    workers = worker_count() if workers is None else int(workers)
    if workers <= 1:
        yield serial_map
        return
    ctx = mp.get_context("fork") if "fork" in mp.get_all_start_methods() else None
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
        yield lambda fn, items: list(ex.map(fn, items))


def spans(total: int, chunk: int, start: int = 0):
    """Fixed (start, count) pieces of range(start, start + total)."""
    chunk = max(1, int(chunk))
    return [(lo, min(chunk, start + total - lo)) for lo in range(start, start + total, chunk)]
