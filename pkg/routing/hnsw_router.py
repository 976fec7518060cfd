# routing/hnsw_router.py
"""
Cluster routing layer: a layered small-world graph over cluster centroids
used to pick the clusters a query should scan.

Each inserted centroid gets OutD - 1 short-range edges to its nearest
already-inserted nodes plus one long-range edge to a uniformly random
already-inserted node. A node is promoted to the next layer with a fixed
probability 1/OutD. Search descends the upper layers greedily and then runs
a best-first search on the ground layer with a queue bounded by ef_search.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from clustering.kmeans import ClusterModel
from core.distances import squared_l2_rows
from core.errors import ArgumentError

logger = logging.getLogger(__name__)

Adjacency = Dict[int, List[int]]


@dataclass(frozen=True)
class RoutingGraph:
    """
    Args:
        layers: per layer, node id -> out-neighbour ids; layers[0] holds every node
        entry_point: node present on the top layer where every search starts
        out_d: out-degree bound (ground layer may carry one extra augmentation edge)
        node_levels: (n,) highest layer of each node
    """
    layers: List[Adjacency]
    entry_point: int
    out_d: int
    node_levels: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.layers[0])

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def ground_adjacency(self) -> List[List[int]]:
        """Ground-layer out-neighbour lists indexed by node id."""
        ground = self.layers[0]
        return [ground[i] for i in range(self.n_nodes)]

    def edge_count(self, layer: int = 0) -> int:
        return sum(len(nbrs) for nbrs in self.layers[layer].values())


def _points_of(centroids: Union[ClusterModel, np.ndarray]) -> np.ndarray:
    if isinstance(centroids, ClusterModel):
        return centroids.centroids
    return np.ascontiguousarray(centroids, dtype=np.float32)


def max_level_for(n_nodes: int, out_d: int) -> int:
    """Highest layer index allowed: ceil(log(n) / log(OutD))."""
    if n_nodes <= 1:
        return 0
    return math.ceil(math.log(n_nodes) / math.log(out_d))


def greedy_closest(points: np.ndarray, layer: Adjacency, query: np.ndarray,
                   entry: int, entry_dist: float) -> Tuple[int, float, int]:
    """
    Greedy walk to a local minimum on one layer.

    Returns:
        (closest node, its squared distance, distance evaluations)
    """
    current, current_dist = entry, entry_dist
    evaluations = 0
    while True:
        nbrs = layer.get(current, [])
        if not nbrs:
            break
        dists = squared_l2_rows(points[nbrs], query)
        evaluations += len(nbrs)
        best = int(np.argmin(dists))
        if dists[best] < current_dist:
            current, current_dist = nbrs[best], float(dists[best])
        else:
            break
    return current, current_dist, evaluations


def search_layer(points: np.ndarray, layer: Adjacency, query: np.ndarray,
                 entry_points: Sequence[Tuple[float, int]], ef: int
                 ) -> Tuple[List[Tuple[float, int]], int]:
    """
    Best-first search on one layer with a result queue bounded by ef.

    Stops when the best unexpanded candidate is farther than the worst
    element of a full result queue.

    Returns:
        (up to ef (distance, node) pairs ascending, distance evaluations)
    """
    visited = {node for _, node in entry_points}
    candidates = list(entry_points)
    heapq.heapify(candidates)
    # max-heap on (distance, id): the worst result sits at the top
    results = [(-dist, -node) for dist, node in entry_points]
    heapq.heapify(results)
    while len(results) > ef:
        heapq.heappop(results)
    evaluations = 0

    while candidates:
        dist, node = heapq.heappop(candidates)
        if len(results) >= ef and dist > -results[0][0]:
            break
        fresh = [nbr for nbr in layer.get(node, []) if nbr not in visited]
        if not fresh:
            continue
        visited.update(fresh)
        dists = squared_l2_rows(points[fresh], query)
        evaluations += len(fresh)
        for nbr, nbr_dist in zip(fresh, dists.tolist()):
            if len(results) < ef or (nbr_dist, nbr) < (-results[0][0], -results[0][1]):
                heapq.heappush(candidates, (nbr_dist, nbr))
                heapq.heappush(results, (-nbr_dist, -nbr))
                if len(results) > ef:
                    heapq.heappop(results)

    return sorted((-neg_dist, -neg_node) for neg_dist, neg_node in results), evaluations


class _RoutingBuilder:
    """Incremental construction state. Not shared once the graph is returned."""

    def __init__(self, points: np.ndarray, out_d: int, ef_construction: int,
                 rng: np.random.Generator):
        self.points = points
        self.out_d = out_d
        self.ef_construction = ef_construction
        self.rng = rng
        self.layers: List[Adjacency] = []
        self.long_links: List[Dict[int, Optional[int]]] = []
        self.members: List[List[int]] = []
        self.entry: Optional[int] = None

    def _add_layer(self) -> None:
        self.layers.append({})
        self.long_links.append({})
        self.members.append([])

    def _pick_long_link(self, layer: int, exclude: set) -> Optional[int]:
        pool = self.members[layer]
        if len(exclude) >= len(pool):
            return None
        while True:
            pick = pool[int(self.rng.integers(len(pool)))]
            if pick not in exclude:
                return pick

    def _link_back(self, layer: int, node: int, new_node: int) -> None:
        """Add node -> new_node as a short-range edge, keeping the OutD - 1 nearest."""
        adj = self.layers[layer]
        long_link = self.long_links[layer].get(node)
        short = [v for v in adj[node] if v != long_link]
        short.append(new_node)
        if len(short) > self.out_d - 1:
            dists = squared_l2_rows(self.points[short], self.points[node])
            keep = np.argsort(dists, kind='stable')[:self.out_d - 1]
            short = [short[i] for i in sorted(keep)]
        adj[node] = short + ([long_link] if long_link is not None else [])

    def insert(self, node: int, level: int) -> None:
        query = self.points[node]
        if self.entry is None:
            for _ in range(level + 1):
                self._add_layer()
            for layer in range(level + 1):
                self.layers[layer][node] = []
                self.members[layer].append(node)
            self.entry = node
            return

        top = len(self.layers) - 1
        entry = self.entry
        entry_dist = float(squared_l2_rows(self.points[[entry]], query)[0])
        for layer in range(top, level, -1):
            entry, entry_dist, _ = greedy_closest(
                self.points, self.layers[layer], query, entry, entry_dist
            )

        entry_points = [(entry_dist, entry)]
        for layer in range(min(level, top), -1, -1):
            found, _ = search_layer(
                self.points, self.layers[layer], query, entry_points, self.ef_construction
            )
            short = [nbr for _, nbr in found[:self.out_d - 1]]
            long_link = self._pick_long_link(layer, set(short))
            self.layers[layer][node] = short + ([long_link] if long_link is not None else [])
            self.long_links[layer][node] = long_link
            for nbr in short:
                self._link_back(layer, nbr, node)
            self.members[layer].append(node)
            entry_points = found

        for layer in range(top + 1, level + 1):
            self._add_layer()
            self.layers[layer][node] = []
            self.members[layer].append(node)
        if level > top:
            self.entry = node


def build_routing(centroids: Union[ClusterModel, np.ndarray], out_d: int,
                  ef_construction: int = 40, seed: int = 0) -> RoutingGraph:
    """
    Build the routing graph by inserting centroids in id order.

    Args:
        centroids: ClusterModel or (n_cluster, d) array
        out_d: Out-degree (OutD - 1 short-range edges + 1 long-range edge)
        ef_construction: Candidate queue bound while inserting
        seed: RNG seed for levels and long-range targets

    Returns:
        RoutingGraph (not yet augmented)

    Raises:
        ArgumentError: out_d < 2 or no centroids
    """
    if out_d < 2:
        raise ArgumentError(f"out_d must be >= 2, got {out_d}")
    if ef_construction < 1:
        raise ArgumentError(f"ef_construction must be >= 1, got {ef_construction}")
    points = _points_of(centroids)
    n_nodes = points.shape[0]
    if n_nodes < 1:
        raise ArgumentError("Routing graph needs at least one centroid")

    rng = np.random.default_rng(seed)
    cap = max_level_for(n_nodes, out_d)
    promote = 1.0 / out_d
    levels = np.zeros(n_nodes, dtype=np.int64)
    for node in range(n_nodes):
        level = 0
        while level < cap and rng.random() < promote:
            level += 1
        levels[node] = level

    builder = _RoutingBuilder(points, out_d, ef_construction, rng)
    for node in range(n_nodes):
        builder.insert(node, int(levels[node]))
        if (node + 1) % 5000 == 0:
            logger.info(f"Routing graph: inserted {node + 1}/{n_nodes} centroids")

    levels.setflags(write=False)
    graph = RoutingGraph(
        layers=builder.layers,
        entry_point=int(builder.entry),
        out_d=out_d,
        node_levels=levels,
    )
    logger.info(
        f"Built routing graph: {n_nodes} nodes, {graph.n_layers} layers, "
        f"{graph.edge_count(0)} ground edges"
    )
    return graph


def route_counted(graph: RoutingGraph, centroids: Union[ClusterModel, np.ndarray],
                  query: np.ndarray, nscan: int, ef_search: int
                  ) -> Tuple[List[Tuple[int, float]], int]:
    """route(), also returning the number of centroid distance evaluations."""
    points = _points_of(centroids)
    if not 1 <= nscan <= graph.n_nodes:
        raise ArgumentError(f"nscan must be in [1, n_cluster={graph.n_nodes}], got {nscan}")
    if ef_search < nscan:
        raise ArgumentError(f"ef_search ({ef_search}) must be >= nscan ({nscan})")
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if query.shape[0] != points.shape[1]:
        raise ArgumentError(f"Query dimension {query.shape[0]} != centroid dimension {points.shape[1]}")

    entry = graph.entry_point
    entry_dist = float(squared_l2_rows(points[[entry]], query)[0])
    evaluations = 1
    for layer in range(graph.n_layers - 1, 0, -1):
        entry, entry_dist, evals = greedy_closest(
            points, graph.layers[layer], query, entry, entry_dist
        )
        evaluations += evals

    found, evals = search_layer(points, graph.layers[0], query, [(entry_dist, entry)], ef_search)
    evaluations += evals
    return [(node, dist) for dist, node in found[:nscan]], evaluations


def route(graph: RoutingGraph, centroids: Union[ClusterModel, np.ndarray],
          query: np.ndarray, nscan: int, ef_search: int) -> List[Tuple[int, float]]:
    """
    Select the clusters to scan for a query.

    Args:
        graph: Routing graph (augmented)
        centroids: The centroids the graph was built over
        query: (d,) vector
        nscan: Clusters to return
        ef_search: Ground-layer queue bound, >= nscan

    Returns:
        nscan (cluster id, exact squared distance) pairs, ascending

    Raises:
        ArgumentError: nscan > n_cluster, ef_search < nscan, or dimension mismatch
    """
    selected, _ = route_counted(graph, centroids, query, nscan, ef_search)
    return selected


def exhaustive_route(centroids: Union[ClusterModel, np.ndarray], query: np.ndarray,
                     nscan: int) -> List[Tuple[int, float]]:
    """Exact nearest nscan centroids (ties to the lower id)."""
    points = _points_of(centroids)
    if not 1 <= nscan <= points.shape[0]:
        raise ArgumentError(f"nscan must be in [1, n_cluster={points.shape[0]}], got {nscan}")
    query = np.asarray(query, dtype=np.float32).reshape(-1)
    if query.shape[0] != points.shape[1]:
        raise ArgumentError(f"Query dimension {query.shape[0]} != centroid dimension {points.shape[1]}")
    dists = squared_l2_rows(points, query)
    order = np.lexsort((np.arange(points.shape[0]), dists))[:nscan]
    return [(int(i), float(dists[i])) for i in order]
