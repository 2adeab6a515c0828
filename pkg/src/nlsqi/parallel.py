"""Order-preserving map over sample indices.

Work items are pure functions of their index, and results come back in
index order, so reductions are identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, Iterable


def default_workers() -> int:
    env = os.environ.get("NLSQI_WORKERS")
    return max(1, int(env)) if env else 1


def _run_chunk(fn, chunk, args):
    return [fn(i, *args) for i in chunk]


def map_indexed(fn: Callable, indices: Iterable[int], workers: int | None, *args) -> list:
    idx = list(indices)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(idx) < 2:
        return [fn(i, *args) for i in idx]
    size = max(1, -(-len(idx) // (4 * workers)))
    chunks = [idx[i:i + size] for i in range(0, len(idx), size)]
    out: list = []
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for part in ex.map(partial(_run_chunk, fn), chunks, [args] * len(chunks)):
            out.extend(part)
    return out
