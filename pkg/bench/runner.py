# bench/runner.py
"""
Benchmark loop: recall, latency (mean / p99), stage breakdown, memory and VQ
for a grid of search parameters, emitted as a pandas DataFrame.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from bench.ground_truth import GroundTruth
from core.errors import ArgumentError, StorageError, ZoomError
from core.metrics import candidate_hit_rate, vq
from core.types import SearchParams, VectorDataset
from fullview.store import RerankPlan
from routing.connectivity import graph_stats
from routing.hnsw_router import build_routing
from utils.config import load_settings
from zoom.index import QueryResult, ZoomIndex, preview, search

logger = logging.getLogger(__name__)

BENCH_COLUMNS = [
    'k', 'r', 'nscan', 'ef_search', 'mode', 'recall', 'latency_ms_mean', 'latency_ms_p99',
    't_cs_ms', 't_vs_ms', 't_rerank_ms', 'memory_bytes', 'vq', 'qps', 'n_queries',
]
QUERY_COLUMNS = ['rank', 'id', 'distance', 't_cs_us', 't_vs_us', 't_rerank_us']


def write_csv(table: pd.DataFrame, path: str) -> None:
    """
    Write a report table without its index.

    Raises:
        StorageError: the file could not be written
    """
    try:
        table.to_csv(path, index=False)
    except OSError as e:
        logger.error(f"Writing {path} failed: {e}")
        raise StorageError(f"Cannot write {path}: {e}") from e
    logger.info(f"Wrote {len(table)} rows to {path}")


@dataclass(frozen=True)
class BenchReport:
    """One row per parameter point, columns in BENCH_COLUMNS order."""
    rows: pd.DataFrame

    def to_csv(self, path: str) -> None:
        write_csv(self.rows, path)

    def to_table(self) -> str:
        return self.rows.to_string(index=False, float_format=lambda x: f"{x:.4f}")


def query_recall(found: Sequence[int], truth: Sequence[int], k: int) -> float:
    """|found ∩ truth[:k]| / k; found may be shorter than k when few vectors were scanned."""
    truth_set = set(int(i) for i in list(truth)[:k])
    return len(truth_set.intersection(int(i) for i in found)) / k


def param_grid(k_values: Iterable[int], r_values: Iterable[int], nscan_values: Iterable[int],
               ef_values: Iterable[int], n_cluster: Optional[int] = None,
               preview_only: bool = False, exhaustive_routing: bool = False) -> List[SearchParams]:
    """Cartesian grid, skipping points that violate k <= r, nscan <= ef_search or nscan <= n_cluster."""
    grid = []
    for k, r, nscan, ef in product(k_values, r_values, nscan_values, ef_values):
        if k > r or nscan > ef or (n_cluster is not None and nscan > n_cluster):
            logger.debug(f"Skipping invalid grid point k={k} r={r} nscan={nscan} ef={ef}")
            continue
        grid.append(SearchParams(k=k, r=r, nscan=nscan, ef_search=ef,
                                 preview_only=preview_only,
                                 exhaustive_routing=exhaustive_routing))
    if not grid:
        raise ArgumentError("Parameter grid has no valid points")
    return grid


def _run_queries(index: ZoomIndex, queries: np.ndarray, params: SearchParams,
                 plan: Optional[RerankPlan], threads: int):
    """Returns (results, per-query latency ms, wall seconds)."""

    def one(query: np.ndarray):
        started = time.perf_counter()
        result = search(index, query, params, plan)
        return result, (time.perf_counter() - started) * 1000.0

    wall_start = time.perf_counter()
    if threads <= 1:
        timed = [one(q) for q in queries]
    else:
        with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="bench") as pool:
            timed = list(pool.map(one, queries))
    wall = time.perf_counter() - wall_start
    return [t[0] for t in timed], np.array([t[1] for t in timed]), wall


def run_point(index: ZoomIndex, queries: VectorDataset, truth: GroundTruth,
              params: SearchParams, plan: Optional[RerankPlan] = None,
              machine_memory_bytes: Optional[int] = None, threads: int = 1,
              warmup: bool = True) -> Dict[str, object]:
    """
    Measure one parameter point over every query.

    Raises:
        ArgumentError: truth does not cover the queries or holds fewer than k ids
    """
    if truth.n_queries != queries.n:
        raise ArgumentError(f"Ground truth covers {truth.n_queries} queries, query file has {queries.n}")
    if truth.k < params.k:
        raise ArgumentError(f"Ground truth holds k={truth.k}, benchmark asks for k={params.k}")
    machine_memory_bytes = machine_memory_bytes or load_settings().machine_memory_bytes

    if warmup:
        _run_queries(index, queries.data, params, plan, threads)
    results, latencies, wall = _run_queries(index, queries.data, params, plan, threads)

    recall_value = float(np.mean([
        query_recall(res.ids, truth.ids[i], params.k) for i, res in enumerate(results)
    ]))
    mean_ms = float(latencies.mean())
    memory = index.memory_bytes()
    row = {
        'k': params.k,
        'r': params.r,
        'nscan': params.nscan,
        'ef_search': params.ef_search,
        'mode': params.mode,
        'recall': recall_value,
        'latency_ms_mean': mean_ms,
        'latency_ms_p99': float(np.percentile(latencies, 99)),
        't_cs_ms': float(np.mean([res.t_cs_us for res in results])) / 1000.0,
        't_vs_ms': float(np.mean([res.t_vs_us for res in results])) / 1000.0,
        't_rerank_ms': float(np.mean([res.t_rerank_us for res in results])) / 1000.0,
        'memory_bytes': memory,
        'vq': vq(mean_ms, memory, machine_memory_bytes, index.n),
        'qps': queries.n / wall if wall > 0 else float('inf'),
        'n_queries': queries.n,
    }
    logger.info(
        f"k={params.k} r={params.r} nscan={params.nscan} ef={params.ef_search} "
        f"{params.mode}: recall={recall_value:.4f}, {mean_ms:.3f} ms"
    )
    return row


def run_grid(index: ZoomIndex, queries: VectorDataset, truth: GroundTruth,
             grid: Sequence[SearchParams], plan: Optional[RerankPlan] = None,
             machine_memory_bytes: Optional[int] = None, threads: int = 1,
             warmup: bool = True) -> BenchReport:
    """run_point for every grid entry, in order."""
    rows = [
        run_point(index, queries, truth, params, plan, machine_memory_bytes, threads, warmup)
        for params in grid
    ]
    return BenchReport(pd.DataFrame(rows, columns=BENCH_COLUMNS))


def query_rows(result: QueryResult) -> pd.DataFrame:
    """One query's answer in the query CSV schema."""
    rows = [
        {
            'rank': rank,
            'id': vector_id,
            'distance': distance,
            't_cs_us': result.t_cs_us,
            't_vs_us': result.t_vs_us,
            't_rerank_us': result.t_rerank_us,
        }
        for rank, (vector_id, distance) in enumerate(result.neighbors, 1)
    ]
    return pd.DataFrame(rows, columns=QUERY_COLUMNS)


def hitrate_table(index: ZoomIndex, queries: VectorDataset, truth: GroundTruth, k: int,
                  r_values: Sequence[int], nscan: int, ef_search: int,
                  exhaustive_routing: bool = False) -> pd.DataFrame:
    """
    Probability that the true top-k falls inside the preview top-r, per r.

    One preview with the largest r serves every smaller r by prefix.
    """
    r_values = sorted(set(int(r) for r in r_values))
    if not r_values or r_values[0] < 1:
        raise ArgumentError("r values must be positive")
    if truth.k < k:
        raise ArgumentError(f"Ground truth holds k={truth.k}, asked for k={k}")
    params = SearchParams(k=1, r=r_values[-1], nscan=nscan, ef_search=ef_search,
                          exhaustive_routing=exhaustive_routing)
    hits = {r: [] for r in r_values}
    for i, query in enumerate(queries.data):
        candidate_ids = [vector_id for vector_id, _ in preview(index, query, params).candidates]
        for r in r_values:
            hits[r].append(candidate_hit_rate(truth.ids[i], candidate_ids[:r], k))
    return pd.DataFrame({
        'k': k,
        'r': r_values,
        'nscan': nscan,
        'hit_rate': [float(np.mean(hits[r])) for r in r_values],
    })


def graph_table(index: ZoomIndex) -> pd.DataFrame:
    """
    Ground-layer in-degree histogram of the routing graph before and after
    connectivity augmentation. The pre-augmentation graph is rebuilt from the
    stored centroids with the index seed.
    """
    config = index.config
    raw = build_routing(index.clusters, config.out_d, config.ef_construction, config.seed)
    before = graph_stats(raw)
    after = graph_stats(index.routing)
    if after.scc_count != 1:
        raise ZoomError(f"Index routing graph has {after.scc_count} strongly connected components")
    degrees = sorted(set(before.indegree_histogram) | set(after.indegree_histogram))
    table = pd.DataFrame({
        'indegree': degrees,
        'nodes_before': [before.indegree_histogram.get(x, 0) for x in degrees],
        'nodes_after': [after.indegree_histogram.get(x, 0) for x in degrees],
    })
    table.attrs['scc_before'] = before.scc_count
    table.attrs['scc_after'] = after.scc_count
    table.attrs['zero_indegree_before'] = before.zero_indegree_count
    table.attrs['zero_indegree_after'] = after.zero_indegree_count
    return table
