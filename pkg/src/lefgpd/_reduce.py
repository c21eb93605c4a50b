"""Deterministic chunked reductions.

Grid sweeps are split into fixed-size chunks that may be evaluated by a
thread pool; the per-chunk partial sums are then combined pairwise in chunk
index order.  The chunk layout never depends on the worker count, so the
result is bit-identical for any value of ``LEFGPD_THREADS``.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 1 << 14


def worker_count():
    """Number of worker threads, capped by the ``LEFGPD_THREADS`` env var."""
    raw = os.environ.get("LEFGPD_THREADS", "").strip()
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return os.cpu_count() or 1


def pairwise_sum(values):
    """Pairwise sum of a sequence of numbers (or arrays) in index order."""
    values = list(values)
    if not values:
        return 0.0
    while len(values) > 1:
        paired = [values[i] + values[i + 1] for i in range(0, len(values) - 1, 2)]
        if len(values) % 2:
            paired.append(values[-1])
        values = paired
    return values[0]


def map_ordered(fn, items, workers=None):
    """``[fn(x) for x in items]``, possibly concurrent, order preserved."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def chunked_weighted_sum(fn, grid, chunk=CHUNK):
    """Return ``sum_j w_j fn(x_j)`` over a quadrature grid, chunk by chunk.

    ``grid`` needs ``size`` and ``slice(start, stop)`` returning an
    ``(m, n)`` array of nodes, plus either a uniform ``weight`` or a
    ``weight_slice(start, stop)`` method.  ``fn`` maps nodes to ``(m,)``
    values.  Each chunk is reduced with numpy's sum on a contiguous array and
    chunk totals are combined with :func:`pairwise_sum`.
    """
    starts = range(0, grid.size, chunk)
    per_node = hasattr(grid, "weight_slice")

    def partial(start):
        stop = min(start + chunk, grid.size)
        vals = np.asarray(fn(grid.slice(start, stop)))
        if per_node:
            w = grid.weight_slice(start, stop)
            vals = vals * w.reshape(w.shape + (1,) * (vals.ndim - 1))
        return np.ascontiguousarray(vals).sum(axis=0)

    total = pairwise_sum(map_ordered(partial, starts))
    return total if per_node else grid.weight * total
