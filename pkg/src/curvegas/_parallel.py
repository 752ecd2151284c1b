"""Chunked execution of row-independent kernels on a thread pool.

The compiled kernels release the GIL, so threads give real parallelism.
Every row keys its noise by its global index, so results never depend on
how rows are split across workers.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import ConfigError


def resolve_threads(threads=None):
    """Worker count: ``threads``, else ``$CURVEGAS_THREADS``, else 1."""
    source = "threads"
    if threads is None:
        threads = os.environ.get("CURVEGAS_THREADS", "1")
        source = "CURVEGAS_THREADS"
    try:
        n = int(threads)
    except (TypeError, ValueError):
        n = 0
    if n < 1:
        raise ConfigError(f"{source} must be a positive integer, got {threads!r}")
    return n


def run_chunks(fn, n_rows, threads=1):
    """Call ``fn(start, stop)`` on contiguous row ranges; results in row order."""
    threads = resolve_threads(threads)
    if threads == 1 or n_rows < 2:
        return [fn(0, n_rows)]
    bounds = np.linspace(0, n_rows, min(threads, n_rows) + 1).astype(int)
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), zip(bounds[:-1], bounds[1:])))
