# fullview/rerank.py
"""
Full-view step: exact distances for the preview candidates, read from disk.

Batches are consumed as they complete and folded into a private top-k heap,
so distance work overlaps with the reads still in flight.
"""

import heapq
import logging
import statistics
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core.distances import squared_l2_rows
from core.errors import ArgumentError
from core.types import VectorDataset
from fullview.store import FullViewStore, RerankPlan, iter_batches

logger = logging.getLogger(__name__)

AUTOTUNE_BATCH_SIZES = (1, 4, 8, 16, 32)
AUTOTUNE_RUNS = 5


def _candidate_ids(candidates: Sequence) -> List[int]:
    """Accepts (id, distance) pairs or bare ids; keeps first occurrence order."""
    ids = [int(c[0]) if isinstance(c, (tuple, list)) else int(c) for c in candidates]
    return list(dict.fromkeys(ids))


def _ordered(heap: List[Tuple[float, int]]) -> List[Tuple[int, float]]:
    return [(-neg_id, -neg_dist) for neg_dist, neg_id in sorted(heap, reverse=True)]


def _push(heap: List[Tuple[float, int]], k: int, vector_id: int, dist: float) -> None:
    # max-heap on (distance, id): the worst kept entry sits at heap[0]
    item = (-dist, -vector_id)
    if len(heap) < k:
        heapq.heappush(heap, item)
    elif item > heap[0]:
        heapq.heapreplace(heap, item)


def rerank(store: FullViewStore, query: np.ndarray, candidates: Sequence, k: int,
           plan: RerankPlan) -> List[Tuple[int, float]]:
    """
    Recompute exact squared L2 for every candidate and keep the best k.

    Args:
        store: Open full-view store
        query: (d,) query vector
        candidates: preview top-R as (id, preview distance) pairs, or bare ids
        k: Neighbours to return, k <= number of distinct candidates
        plan: Batch size and submission count

    Returns:
        k (id, exact squared distance) pairs ascending, ties by lower id

    Raises:
        ArgumentError: k out of range or dimension mismatch
        StorageError: a read failed
    """
    ids = _candidate_ids(candidates)
    if not 1 <= k <= len(ids):
        raise ArgumentError(f"k must be in [1, {len(ids)}] candidates, got {k}")
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if query.shape[0] != store.d:
        raise ArgumentError(f"Query dimension {query.shape[0]} != store dimension {store.d}")

    heap: List[Tuple[float, int]] = []
    for batch_ids, vectors in iter_batches(store, ids, plan):
        dists = squared_l2_rows(vectors, query)
        for vector_id, dist in zip(batch_ids.tolist(), dists.tolist()):
            _push(heap, k, vector_id, dist)
    return _ordered(heap)


def rerank_in_memory(dataset: VectorDataset, query: np.ndarray, candidates: Sequence,
                     k: int) -> List[Tuple[int, float]]:
    """rerank() against the in-memory dataset; same arithmetic, no I/O."""
    ids = _candidate_ids(candidates)
    if not 1 <= k <= len(ids):
        raise ArgumentError(f"k must be in [1, {len(ids)}] candidates, got {k}")
    id_array = np.asarray(ids, dtype=np.int64)
    dists = squared_l2_rows(dataset.data[id_array], np.asarray(query, dtype=np.float32))
    order = np.lexsort((id_array, dists))[:k]
    return [(int(id_array[i]), float(dists[i])) for i in order]


@dataclass(frozen=True)
class AutotuneReport:
    """Winning plan plus the median rerank latency (ms) of every batch size tried."""
    plan: RerankPlan
    r: int
    median_ms: Dict[int, float] = field(default_factory=dict)

    def latency_of(self, b: int) -> float:
        return self.median_ms[b]


def autotune_grid(r: int) -> List[int]:
    return sorted({b for b in AUTOTUNE_BATCH_SIZES if b <= r} | {r})


def autotune_report(store: FullViewStore, r: int, runs: int = AUTOTUNE_RUNS,
                    seed: int = 0, query: Optional[np.ndarray] = None) -> AutotuneReport:
    """
    Time rerank of r random ids for every b in the grid (s = ceil(r / b))
    and pick the plan with the lowest median latency.

    Every grid point reads the same id sets so the comparison is paired.
    """
    if r < 1:
        raise ArgumentError(f"r must be >= 1, got {r}")
    rng = np.random.default_rng(seed)
    size = min(r, store.n)
    id_sets = [rng.choice(store.n, size=size, replace=False) for _ in range(runs)]
    if query is None:
        query = store.read_rows([0])[0]

    medians: Dict[int, float] = {}
    for b in autotune_grid(r):
        plan = RerankPlan.for_r(b, r)
        samples = []
        for ids in id_sets:
            started = time.perf_counter()
            rerank(store, query, ids, 1, plan)
            samples.append((time.perf_counter() - started) * 1000.0)
        medians[b] = statistics.median(samples)
        logger.debug(f"Autotune r={r} b={b} s={plan.s}: median {medians[b]:.3f} ms")

    best_b = min(medians, key=lambda b: (medians[b], b))
    best = RerankPlan.for_r(best_b, r)
    logger.info(
        f"Autotuned rerank plan for r={r}: b={best.b}, s={best.s} "
        f"({medians[best_b]:.3f} ms median, one-at-a-time {medians[1]:.3f} ms)"
    )
    return AutotuneReport(plan=best, r=r, median_ms=medians)


def autotune_plan(store: FullViewStore, r: int) -> RerankPlan:
    """
    Returns:
        The fastest (b, s) over b in {1, 4, 8, 16, 32, r}; (1, 1) when r == 1
    """
    if r == 1:
        return RerankPlan(1, 1)
    return autotune_report(store, r).plan
