# bench/ground_truth.py
"""
Exact top-k ground truth files.

Format (little-endian): magic "ZGT1", u32 version, u64 n_queries, u64 k,
then n_queries*k int64 ids, then n_queries*k float64 squared distances.
The same inputs always produce the same bytes.
"""

import logging
import os
from dataclasses import dataclass

import numpy as np

from core.errors import ArgumentError, FormatError, StorageError
from core.oracle import exact_topk_batch
from core.types import VectorDataset

logger = logging.getLogger(__name__)

MAGIC = b'ZGT1'
VERSION = 1
HEADER = np.dtype([('magic', 'S4'), ('version', '<u4'), ('n_queries', '<u8'), ('k', '<u8')])


@dataclass(frozen=True)
class GroundTruth:
    """ids (nq, k) int64 and distances (nq, k) float64, ascending per row."""
    ids: np.ndarray
    distances: np.ndarray

    @property
    def n_queries(self) -> int:
        return self.ids.shape[0]

    @property
    def k(self) -> int:
        return self.ids.shape[1]

    def top(self, query_index: int, k: int) -> np.ndarray:
        if k > self.k:
            raise ArgumentError(f"Ground truth holds k={self.k}, asked for {k}")
        return self.ids[query_index, :k]


def compute_ground_truth(dataset: VectorDataset, queries: VectorDataset, k: int) -> GroundTruth:
    """
    Raises:
        ArgumentError: query and database dimensions differ, or k > n
    """
    if queries.d != dataset.d:
        raise ArgumentError(f"Query dimension {queries.d} != dataset dimension {dataset.d}")
    logger.info(f"Computing exact top-{k} for {queries.n} queries over {dataset.n} vectors")
    ids, distances = exact_topk_batch(dataset, queries.data, k)
    return GroundTruth(ids, distances)


def write_ground_truth(truth: GroundTruth, path: str) -> None:
    header = np.zeros(1, dtype=HEADER)
    header['magic'] = MAGIC
    header['version'] = VERSION
    header['n_queries'] = truth.n_queries
    header['k'] = truth.k
    try:
        with open(path, 'wb') as f:
            f.write(header.tobytes())
            f.write(truth.ids.astype('<i8').tobytes())
            f.write(truth.distances.astype('<f8').tobytes())
    except OSError as e:
        logger.error(f"Writing ground truth {path} failed: {e}")
        raise StorageError(f"Cannot write ground truth {path}: {e}") from e
    logger.info(f"Wrote ground truth {path}: {truth.n_queries} queries, k={truth.k}")


def read_ground_truth(path: str) -> GroundTruth:
    """
    Raises:
        ArgumentError: file missing
        FormatError: bad magic, version or size
    """
    if not os.path.isfile(path):
        raise ArgumentError(f"Ground truth file not found: {path}")
    with open(path, 'rb') as f:
        buf = f.read()
    if len(buf) < HEADER.itemsize:
        raise FormatError(f"{path}: truncated ground-truth header", offset=len(buf))
    header = np.frombuffer(buf, dtype=HEADER, count=1)[0]
    if bytes(header['magic']) != MAGIC:
        raise FormatError(f"{path}: bad magic {bytes(header['magic'])!r}", offset=0)
    if int(header['version']) != VERSION:
        raise FormatError(f"{path}: unsupported ground-truth version {int(header['version'])}", offset=4)
    nq, k = int(header['n_queries']), int(header['k'])
    expected = HEADER.itemsize + nq * k * 16
    if len(buf) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(buf)}")
    ids = np.frombuffer(buf, dtype='<i8', count=nq * k, offset=HEADER.itemsize).reshape(nq, k)
    distances = np.frombuffer(
        buf, dtype='<f8', count=nq * k, offset=HEADER.itemsize + nq * k * 8
    ).reshape(nq, k)
    return GroundTruth(ids.astype(np.int64), distances.astype(np.float64))
