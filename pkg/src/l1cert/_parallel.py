"""Order-preserving thread-pool map used for independent subproblems."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int | None) -> int:
    if threads is None:
        return max(1, os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    return int(threads)


def pmap(fn, items, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, possibly concurrent; results keep input order."""
    items = list(items)
    nt = min(resolve_threads(threads), max(1, len(items)))
    if nt == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=nt) as ex:
        return list(ex.map(fn, items))
