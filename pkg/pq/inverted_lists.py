# pq/inverted_lists.py
"""
Per-cluster posting lists of the preview index.

Every list holds parallel arrays: vector ids (ascending), PQ codes and the
cached Term-B + Term-C of each vector. Storage is cluster-major: one flat
array per field plus an offsets array, so list c is rows offsets[c]:offsets[c+1].
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from core.errors import ArgumentError


@dataclass(frozen=True)
class InvertedLists:
    """
    Args:
        offsets: (n_cluster + 1,) int64 list boundaries
        ids: (n,) int64 vector ids, cluster-major
        codes: (n, m) uint8 PQ codes in the same order
        cached_terms: (n,) float32 Term-B + Term-C in the same order
    """
    offsets: np.ndarray
    ids: np.ndarray
    codes: np.ndarray
    cached_terms: np.ndarray

    def __post_init__(self):
        n = self.ids.shape[0]
        if self.codes.shape[0] != n or self.cached_terms.shape[0] != n:
            raise ArgumentError("ids, codes and cached_terms must have the same length")
        if self.offsets[0] != 0 or self.offsets[-1] != n:
            raise ArgumentError(f"offsets must span [0, {n}]")
        # writable inputs are copied so the caller's arrays keep their flags
        for name in ('offsets', 'ids', 'codes', 'cached_terms'):
            array = getattr(self, name)
            if array.flags.writeable:
                array = array.copy()
                array.setflags(write=False)
                object.__setattr__(self, name, array)

    @property
    def n_cluster(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def total(self) -> int:
        return self.ids.shape[0]

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def cluster(self, cluster_id: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(ids, codes, cached_terms) of one cluster."""
        if not 0 <= cluster_id < self.n_cluster:
            raise ArgumentError(f"Cluster id {cluster_id} outside [0, {self.n_cluster})")
        start, stop = self.offsets[cluster_id], self.offsets[cluster_id + 1]
        return self.ids[start:stop], self.codes[start:stop], self.cached_terms[start:stop]

    def assignments(self) -> np.ndarray:
        """(n,) cluster id of every vector id."""
        owners = np.empty(self.total, dtype=np.int64)
        owners[self.ids] = np.repeat(np.arange(self.n_cluster, dtype=np.int64), self.sizes())
        return owners


def build_inverted_lists(assignments: np.ndarray, codes: np.ndarray,
                         cached_terms: np.ndarray, n_cluster: int) -> InvertedLists:
    """
    Group vectors by cluster.

    Args:
        assignments: (n,) cluster id per vector id
        codes: (n, m) PQ code per vector id
        cached_terms: (n,) cached term per vector id
        n_cluster: number of lists (empty clusters get empty lists)

    Returns:
        InvertedLists with ids ascending inside every list
    """
    assignments = np.asarray(assignments, dtype=np.int64)
    if assignments.size and (assignments.min() < 0 or assignments.max() >= n_cluster):
        raise ArgumentError(f"Assignments must be in [0, {n_cluster})")
    order = np.argsort(assignments, kind='stable')
    counts = np.bincount(assignments, minlength=n_cluster)
    offsets = np.zeros(n_cluster + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return InvertedLists(
        offsets=offsets,
        ids=order.astype(np.int64),
        codes=np.ascontiguousarray(np.asarray(codes, dtype=np.uint8)[order]),
        cached_terms=np.ascontiguousarray(np.asarray(cached_terms, dtype=np.float32)[order]),
    )
