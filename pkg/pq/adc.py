# pq/adc.py
"""
Asymmetric distance computation for the preview step.

The squared distance from a query q to an encoded vector y = c + r_hat splits
into four terms:

    ||q - c - r_hat||^2 = ||q - c||^2                      Term-A (routing output)
                        + sum_j ||c^j_v||^2                Term-B \\ cached per vector
                        + 2 sum_j <c^j, c^j_v>             Term-C /
                        - 2 sum_j <q^j, c^j_v>             Term-D (per-query table)

Term-A comes from the routing step, Term-B + Term-C are cached at build time
and Term-D is a per-query m x l lookup table, so scanning one vector costs
m + 1 lookup-adds. The naive scan builds one residual table per cluster and
costs 2m per vector; it serves as the reference implementation.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from core.errors import ArgumentError
from pq.codebook import PQCode, PQCodebook, validate_codes, validate_dim, decode
from pq.inverted_lists import InvertedLists

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TermDLut:
    """table[j, v] = -2 <q^j, c^j_v>, shape (m, l), float64."""
    table: np.ndarray

    def lookup(self, code: PQCode) -> float:
        code = np.asarray(code, dtype=np.intp)
        return float(self.table[np.arange(self.table.shape[0]), code].sum())


def _query_slices(codebook: PQCodebook, query: np.ndarray) -> np.ndarray:
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    validate_dim(codebook, query.shape[0])
    return query.reshape(codebook.m, codebook.sub_dim)


def build_termd_lut(codebook: PQCodebook, query: np.ndarray) -> TermDLut:
    """m x l inner products of length sub_dim, sign folded into the table."""
    slices = _query_slices(codebook, query)
    table = -2.0 * np.einsum('jvs,js->jv', codebook.tables.astype(np.float64), slices)
    return TermDLut(table)


def term_a(query: np.ndarray, centroid: np.ndarray) -> float:
    diff = np.asarray(query, dtype=np.float64) - np.asarray(centroid, dtype=np.float64)
    return float((diff * diff).sum())


def adc_naive(codebook: PQCodebook, query: np.ndarray, centroid: np.ndarray,
              code: PQCode) -> float:
    """sum_j ||(q - c)^j - c^j_code[j]||^2, the reference ADC value."""
    shifted = _query_slices(codebook, query) - np.asarray(centroid, dtype=np.float64).reshape(
        codebook.m, codebook.sub_dim)
    words = decode(codebook, code).astype(np.float64).reshape(codebook.m, codebook.sub_dim)
    diff = shifted - words
    return float((diff * diff).sum())


def four_terms(codebook: PQCodebook, query: np.ndarray, centroid: np.ndarray,
               code: PQCode) -> Tuple[float, float, float, float]:
    """(Term-A, Term-B, Term-C, Term-D) for one (query, centroid, code) triple."""
    centroid = np.asarray(centroid, dtype=np.float64).reshape(-1)
    query = np.asarray(query, dtype=np.float64).reshape(-1)
    words = decode(codebook, code).astype(np.float64)
    return (
        term_a(query, centroid),
        float((words * words).sum()),
        float(2.0 * (centroid * words).sum()),
        float(-2.0 * (query * words).sum()),
    )


class TopRSelector:
    """
    Bounded selection of the r smallest estimates.

    Batches are buffered and compacted back to r entries once the buffer
    grows past a few multiples of r. Among equal estimates the entry pushed
    first is kept and ranked first.
    """

    def __init__(self, r: int):
        if r < 1:
            raise ArgumentError(f"r must be >= 1, got {r}")
        self.r = r
        self._ids: List[np.ndarray] = []
        self._dists: List[np.ndarray] = []
        self._buffered = 0

    def push_batch(self, ids: np.ndarray, dists: np.ndarray) -> None:
        if ids.shape[0] == 0:
            return
        self._ids.append(ids)
        self._dists.append(dists)
        self._buffered += ids.shape[0]
        if self._buffered > 4 * self.r:
            self._compact()

    def _compact(self) -> None:
        ids = np.concatenate(self._ids)
        dists = np.concatenate(self._dists)
        # keep push order among survivors so the tie rule survives compaction
        keep = np.sort(np.argsort(dists, kind='stable')[:self.r])
        self._ids, self._dists = [ids[keep]], [dists[keep]]
        self._buffered = keep.shape[0]

    def result(self) -> List[Tuple[int, float]]:
        """Up to r (id, estimate) pairs, ascending."""
        if not self._ids:
            return []
        ids = np.concatenate(self._ids)
        dists = np.concatenate(self._dists)
        order = np.argsort(dists, kind='stable')[:self.r]
        return [(int(i), float(x)) for i, x in zip(ids[order], dists[order])]


def _check_selected(lists: InvertedLists, selected: Sequence[Tuple[int, float]]) -> None:
    for cluster_id, _ in selected:
        if not 0 <= cluster_id < lists.n_cluster:
            raise ArgumentError(f"Cluster id {cluster_id} outside [0, {lists.n_cluster})")


def scan_pq_vectors(lists: InvertedLists, codebook: PQCodebook,
                    selected: Sequence[Tuple[int, float]], query: np.ndarray, r: int,
                    accumulate_float64: bool = False) -> List[Tuple[int, float]]:
    """
    Preview scan: estimate = Term-A + cached term + sum_j lut[j, code[j]].

    Args:
        lists: Inverted lists with cached terms
        codebook: PQ codebook the codes refer to
        selected: (cluster id, exact squared query-to-centroid distance) from routing
        query: (d,) query vector
        r: Candidate-list size
        accumulate_float64: Sum in float64 instead of float32

    Returns:
        Up to r (vector id, estimated squared distance) pairs, ascending

    Raises:
        ArgumentError: r < 1, unknown cluster id or dimension mismatch
    """
    selector = TopRSelector(r)
    _check_selected(lists, selected)
    dtype = np.float64 if accumulate_float64 else np.float32
    lut = build_termd_lut(codebook, query).table.astype(dtype)
    columns = np.arange(codebook.m)[None, :]

    for cluster_id, centroid_dist in selected:
        ids, codes, cached = lists.cluster(cluster_id)
        if ids.shape[0] == 0:
            continue
        estimates = lut[columns, codes].sum(axis=1, dtype=dtype)
        estimates += cached.astype(dtype)
        estimates += dtype(centroid_dist)
        selector.push_batch(ids, estimates)

    return selector.result()


def scan_pq_vectors_naive(lists: InvertedLists, codebook: PQCodebook,
                          selected: Sequence[Tuple[int, float]], query: np.ndarray,
                          r: int, centroids: np.ndarray) -> List[Tuple[int, float]]:
    """
    Reference scan: per selected cluster, a table of ||(q - c)^j - c^j_v||^2
    and 2m lookup-adds per vector, all in float64.

    Args:
        centroids: (n_cluster, d) centroids, needed because no Term-A is reused
    """
    selector = TopRSelector(r)
    _check_selected(lists, selected)
    slices = _query_slices(codebook, query)
    tables64 = codebook.tables.astype(np.float64)
    columns = np.arange(codebook.m)[None, :]
    centroids = np.asarray(centroids, dtype=np.float64)

    for cluster_id, _ in selected:
        ids, codes, _ = lists.cluster(cluster_id)
        if ids.shape[0] == 0:
            continue
        shifted = slices - centroids[cluster_id].reshape(codebook.m, codebook.sub_dim)
        diff = shifted[:, None, :] - tables64
        table = (diff * diff).sum(axis=2)
        selector.push_batch(ids, table[columns, validate_codes(codebook, codes)].sum(axis=1))

    return selector.result()
