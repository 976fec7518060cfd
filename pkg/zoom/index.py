# zoom/index.py
"""
The multi-view index: build pipeline and the online query path.

Build: k-means -> routing graph -> connectivity augmentation -> residuals ->
PQ codebooks -> codes + inverted lists -> cached Term-B + Term-C -> full-view
file on disk.

Query: route to nscan clusters (t_cs), PQ-scan them into a top-R candidate
list (t_vs), then rerank the candidates with exact full-length vectors read
from disk (t_rerank).
"""

import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from clustering.kmeans import ClusterModel, compute_residuals, kmeans_train
from core.errors import ArgumentError, ZoomError
from core.metrics import memory_cost
from core.types import SearchParams, VectorDataset, ZoomConfig
from fullview.rerank import rerank
from fullview.store import FullViewStore, RerankPlan, write_store
from pq.adc import scan_pq_vectors
from pq.codebook import PQCodebook, encode_batch, precompute_terms, train_codebooks
from pq.inverted_lists import InvertedLists, build_inverted_lists
from routing.connectivity import connectivity_augment, graph_stats
from routing.hnsw_router import RoutingGraph, build_routing, exhaustive_route, route_counted
from utils.config import load_settings

logger = logging.getLogger(__name__)

DEFAULT_RERANK_BATCH = 16


@dataclass
class ZoomIndex:
    """
    A built (or deserialized) index. Immutable in use; rerank_batch may be
    replaced after autotuning.
    """
    config: ZoomConfig
    clusters: ClusterModel
    routing: RoutingGraph
    codebook: PQCodebook
    lists: InvertedLists
    fullview: FullViewStore
    augmentation_edges: int = 0
    rerank_batch: int = DEFAULT_RERANK_BATCH
    scan_float64: bool = field(default_factory=lambda: load_settings().scan_float64)

    @property
    def n(self) -> int:
        return self.lists.total

    @property
    def d(self) -> int:
        return self.clusters.d

    def memory_bytes(self) -> int:
        """Preview-index memory by the analytic model."""
        return memory_cost(self.config, self.n, self.d)

    def plan_for(self, r: int) -> RerankPlan:
        return RerankPlan.for_r(self.rerank_batch, r)

    def close(self) -> None:
        self.fullview.close()


@dataclass(frozen=True)
class PreviewResult:
    """Top-R candidates with PQ-estimated distances and preview stage timings (us)."""
    candidates: List[Tuple[int, float]]
    clusters: List[Tuple[int, float]]
    t_cs_us: float
    t_vs_us: float
    route_evaluations: int = 0


@dataclass(frozen=True)
class QueryResult:
    """
    Args:
        neighbors: (id, squared distance) ascending; exact unless preview_only
        t_cs_us / t_vs_us / t_rerank_us: stage timings in microseconds
    """
    neighbors: List[Tuple[int, float]]
    t_cs_us: float
    t_vs_us: float
    t_rerank_us: float
    candidates: List[Tuple[int, float]] = field(default_factory=list)

    @property
    def ids(self) -> List[int]:
        return [i for i, _ in self.neighbors]

    @property
    def total_us(self) -> float:
        return self.t_cs_us + self.t_vs_us + self.t_rerank_us


def build(dataset: VectorDataset, config: ZoomConfig, fullview_path: str,
          io_mode: Optional[str] = None) -> ZoomIndex:
    """
    Build every layer of the index and write the full-view file.

    Args:
        dataset: Database vectors
        config: Build configuration
        fullview_path: Where the full-length vectors are written
        io_mode: Read path of the resulting store ('direct' / 'buffered')

    Raises:
        ArgumentError: m does not divide d, n_cluster > n or l > n
        StorageError: full-view file could not be written
    """
    config.check_dimension(dataset.d)
    if config.n_cluster > dataset.n:
        raise ArgumentError(f"n_cluster={config.n_cluster} exceeds n={dataset.n}")
    if config.l > dataset.n:
        raise ArgumentError(f"l={config.l} exceeds n={dataset.n}")

    started = time.perf_counter()
    logger.info(f"Building index: n={dataset.n}, d={dataset.d}, {config}")

    clusters = kmeans_train(dataset, config.n_cluster, config.kmeans_max_iters, config.seed)

    routing = build_routing(clusters, config.out_d, config.ef_construction, config.seed)
    before = graph_stats(routing)
    routing, added = connectivity_augment(routing, clusters)
    logger.info(
        f"Routing graph: {before.scc_count} SCCs and {before.zero_indegree_count} "
        f"unreachable clusters before augmentation, {added} edges added"
    )

    residuals = compute_residuals(dataset, clusters)
    codebook = train_codebooks(residuals, config.m, config.l, config.seed,
                               config.kmeans_max_iters)
    codes = encode_batch(codebook, residuals.data)
    cached = precompute_terms(codebook, clusters.centroids, clusters.assignments, codes)
    lists = build_inverted_lists(clusters.assignments, codes, cached, config.n_cluster)

    store = write_store(dataset, fullview_path, io_mode=io_mode)
    index = ZoomIndex(
        config=config,
        clusters=clusters,
        routing=routing,
        codebook=codebook,
        lists=lists,
        fullview=store,
        augmentation_edges=added,
    )
    logger.info(
        f"Index built in {time.perf_counter() - started:.1f}s, "
        f"model memory {index.memory_bytes()} bytes"
    )
    return index


def _check_query(index: ZoomIndex, query: np.ndarray) -> np.ndarray:
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if query.shape[0] != index.d:
        raise ArgumentError(f"Query dimension {query.shape[0]} != index dimension {index.d}")
    return query


def preview(index: ZoomIndex, query: np.ndarray, params: SearchParams) -> PreviewResult:
    """
    Cluster selection plus PQ scan. No disk access.

    Raises:
        ArgumentError: nscan > n_cluster or dimension mismatch
    """
    query = _check_query(index, query)
    if params.nscan > index.config.n_cluster:
        raise ArgumentError(
            f"nscan={params.nscan} exceeds n_cluster={index.config.n_cluster}"
        )

    t0 = time.perf_counter_ns()
    if params.exhaustive_routing:
        clusters = exhaustive_route(index.clusters, query, params.nscan)
        evaluations = index.config.n_cluster
    else:
        clusters, evaluations = route_counted(
            index.routing, index.clusters, query, params.nscan, params.ef_search
        )
    t1 = time.perf_counter_ns()
    candidates = scan_pq_vectors(
        index.lists, index.codebook, clusters, query, params.r, index.scan_float64
    )
    t2 = time.perf_counter_ns()

    return PreviewResult(
        candidates=candidates,
        clusters=clusters,
        t_cs_us=(t1 - t0) / 1000.0,
        t_vs_us=(t2 - t1) / 1000.0,
        route_evaluations=evaluations,
    )


def search(index: ZoomIndex, query: np.ndarray, params: SearchParams,
           plan: Optional[RerankPlan] = None) -> QueryResult:
    """
    Answer one query.

    When the scanned clusters hold fewer than k vectors, every scanned vector
    is returned. A failed full-view read fails the query; preview distances
    are never mixed into a reranked answer.

    Raises:
        ArgumentError: invalid params or dimension mismatch
        StorageError: a full-view read failed
    """
    query = _check_query(index, query)
    stage = preview(index, query, params)
    k = min(params.k, len(stage.candidates))

    if params.preview_only or k == 0:
        return QueryResult(
            neighbors=stage.candidates[:k],
            t_cs_us=stage.t_cs_us,
            t_vs_us=stage.t_vs_us,
            t_rerank_us=0.0,
            candidates=stage.candidates,
        )

    t0 = time.perf_counter_ns()
    neighbors = rerank(index.fullview, query, stage.candidates, k,
                       plan or index.plan_for(len(stage.candidates)))
    t1 = time.perf_counter_ns()
    return QueryResult(
        neighbors=neighbors,
        t_cs_us=stage.t_cs_us,
        t_vs_us=stage.t_vs_us,
        t_rerank_us=(t1 - t0) / 1000.0,
        candidates=stage.candidates,
    )


def validate_index(index: ZoomIndex) -> None:
    """
    Raises:
        ZoomError: naming the first violated invariant
    """
    n_cluster = index.config.n_cluster
    if index.clusters.n_cluster != n_cluster:
        raise ZoomError(f"Cluster model has {index.clusters.n_cluster} centroids, config says {n_cluster}")
    if index.routing.n_nodes != n_cluster:
        raise ZoomError(f"Routing ground layer has {index.routing.n_nodes} nodes, expected {n_cluster}")
    if index.lists.n_cluster != n_cluster:
        raise ZoomError(f"Inverted lists cover {index.lists.n_cluster} clusters, expected {n_cluster}")
    if index.lists.total != index.fullview.n:
        raise ZoomError(f"Inverted lists hold {index.lists.total} vectors, full view holds {index.fullview.n}")
    if not np.array_equal(np.sort(index.lists.ids), np.arange(index.lists.total)):
        raise ZoomError("Inverted lists do not hold every vector id exactly once")
    if not np.array_equal(index.lists.assignments(), index.clusters.assignments):
        raise ZoomError("Inverted list membership disagrees with cluster assignments")
    if index.codebook.d != index.d or index.codebook.m != index.config.m:
        raise ZoomError("Codebook shape does not match the index configuration")

    for depth in range(1, index.routing.n_layers):
        upper = set(index.routing.layers[depth])
        if not upper <= set(index.routing.layers[depth - 1]):
            raise ZoomError(f"Routing layer {depth} is not nested in layer {depth - 1}")
    stats = graph_stats(index.routing)
    if stats.scc_count != 1:
        raise ZoomError(f"Routing ground layer has {stats.scc_count} strongly connected components")
