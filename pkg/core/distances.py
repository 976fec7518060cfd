# core/distances.py
"""
Squared Euclidean distance kernels.

Two flavours exist. `squared_l2_rows` subtracts then squares in float64 and is
the exact form used wherever a distance is reported (oracles, routing, rerank).
`pairwise_squared_l2` uses the ||x||^2 - 2<x, c> + ||c||^2 expansion through a
matrix product and is only used to pick argmins over many centroids.
"""

import numpy as np

# rows per block for the expansion kernel; keeps the (block, k) float64 buffer small
PAIRWISE_BLOCK_ROWS = 4096


def squared_l2_rows(rows: np.ndarray, query: np.ndarray) -> np.ndarray:
    """
    Exact squared L2 distance from one query to every row.

    Args:
        rows: (n, d) array
        query: (d,) array

    Returns:
        (n,) float64 distances
    """
    diff = np.asarray(rows, dtype=np.float64) - np.asarray(query, dtype=np.float64)
    return (diff * diff).sum(axis=1)


def squared_norms(rows: np.ndarray) -> np.ndarray:
    rows64 = np.asarray(rows, dtype=np.float64)
    return (rows64 * rows64).sum(axis=1)


def pairwise_squared_l2(x: np.ndarray, y: np.ndarray,
                        y_norms: np.ndarray = None) -> np.ndarray:
    """
    Squared L2 distances between every row of x and every row of y.

    Args:
        x: (n, d) array
        y: (k, d) array
        y_norms: optional precomputed squared norms of y

    Returns:
        (n, k) float64 distances, clipped at zero
    """
    x64 = np.asarray(x, dtype=np.float64)
    y64 = np.asarray(y, dtype=np.float64)
    if y_norms is None:
        y_norms = squared_norms(y64)
    x_norms = (x64 * x64).sum(axis=1)
    dist = x_norms[:, None] - 2.0 * (x64 @ y64.T) + y_norms[None, :]
    np.maximum(dist, 0.0, out=dist)
    return dist


def nearest_rows(x: np.ndarray, y: np.ndarray,
                 block_rows: int = PAIRWISE_BLOCK_ROWS):
    """
    For every row of x, the index of its nearest row of y (ties to the lower index).

    Returns:
        (labels int64 (n,), exact squared distances float64 (n,))
    """
    x = np.asarray(x)
    y = np.asarray(y)
    y_norms = squared_norms(y)
    labels = np.empty(x.shape[0], dtype=np.int64)
    distances = np.empty(x.shape[0], dtype=np.float64)
    for start in range(0, x.shape[0], block_rows):
        block = x[start:start + block_rows]
        block_labels = np.argmin(pairwise_squared_l2(block, y, y_norms), axis=1)
        diff = np.asarray(block, dtype=np.float64) - np.asarray(y[block_labels], dtype=np.float64)
        labels[start:start + block_rows] = block_labels
        distances[start:start + block_rows] = (diff * diff).sum(axis=1)
    return labels, distances
