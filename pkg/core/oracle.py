# core/oracle.py
"""
Exact brute-force nearest-neighbour search. Ground truth for every recall number.
"""

import logging
from typing import List, Tuple

import numpy as np

from core.distances import squared_l2_rows
from core.errors import ArgumentError
from core.types import VectorDataset

logger = logging.getLogger(__name__)


def _ordered_topk(distances: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k smallest distances, ties broken by ascending id."""
    if k < distances.shape[0]:
        # keep every entry tied with the k-th distance so the id tie-break stays exact
        kth = np.partition(distances, k - 1)[k - 1]
        pool = np.flatnonzero(distances <= kth)
    else:
        pool = np.arange(distances.shape[0])
    order = np.lexsort((ids[pool], distances[pool]))
    return pool[order[:k]]


def exact_topk(dataset: VectorDataset, query: np.ndarray, k: int) -> List[Tuple[int, float]]:
    """
    Exhaustive top-k by squared L2.

    Args:
        dataset: Database vectors
        query: (d,) vector
        k: Number of neighbours, 1 <= k <= n

    Returns:
        k (id, squared distance) pairs, distances non-decreasing, ties by lower id

    Raises:
        ArgumentError: Dimension mismatch or k out of range
    """
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if query.shape[0] != dataset.d:
        raise ArgumentError(f"Query dimension {query.shape[0]} != dataset dimension {dataset.d}")
    if not 1 <= k <= dataset.n:
        raise ArgumentError(f"k must be in [1, {dataset.n}], got {k}")

    distances = squared_l2_rows(dataset.data, query)
    ids = dataset.ids
    top = _ordered_topk(distances, ids, k)
    return [(int(ids[i]), float(distances[i])) for i in top]


def exact_topk_batch(dataset: VectorDataset, queries: np.ndarray, k: int):
    """
    exact_topk for every query row.

    Returns:
        (ids int64 (nq, k), distances float64 (nq, k))
    """
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float32))
    out_ids = np.empty((queries.shape[0], k), dtype=np.int64)
    out_dist = np.empty((queries.shape[0], k), dtype=np.float64)
    for i, query in enumerate(queries):
        pairs = exact_topk(dataset, query, k)
        out_ids[i] = [p[0] for p in pairs]
        out_dist[i] = [p[1] for p in pairs]
        if (i + 1) % 1000 == 0:
            logger.info(f"Exact top-{k}: {i + 1}/{queries.shape[0]} queries")
    return out_ids, out_dist
