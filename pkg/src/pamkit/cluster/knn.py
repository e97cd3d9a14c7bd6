"""Exact k-nearest-neighbor graph over embedding vectors.

Dataset sizes here stay small enough (<= ~1e5 segments) that exact search is
affordable; ties are broken by segment id so results are reproducible across
platforms.
"""
from __future__ import annotations

import numpy as np

from ..errors import ParamError


def knn_graph(
    vectors: np.ndarray,
    k: int,
    ids: list[str] | None = None,
    block: int = 256,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest neighbors under Euclidean distance.

    Returns (indices, distances), each [n, k], neighbors ordered by
    (distance, id). The query point itself is excluded.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ParamError(f"expected [n, d] vectors, got shape {x.shape}")
    n = x.shape[0]
    if k >= n:
        raise ParamError(f"k={k} must be smaller than n={n}")
    if ids is not None and len(ids) != n:
        raise ParamError("one id per vector required")

    # Tie-break rank: lexicographic position of each id (row index if no ids).
    if ids is None:
        rank = np.arange(n)
    else:
        rank = np.empty(n, dtype=np.int64)
        rank[np.argsort(np.asarray(ids, dtype=object), kind="stable")] = np.arange(n)

    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        diff = x[lo:hi, None, :] - x[None, :, :]
        d = np.sqrt(np.sum(diff * diff, axis=2))
        for row, i in enumerate(range(lo, hi)):
            d[row, i] = np.inf  # exclude self
            order = np.lexsort((rank, d[row]))[:k]
            indices[i] = order
            distances[i] = d[row, order]
    return indices, distances
