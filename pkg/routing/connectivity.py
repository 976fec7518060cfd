# routing/connectivity.py
"""
Ground-layer connectivity for the routing graph.

A routing graph built by incremental insertion can leave clusters that no
search ever reaches (in-degree zero, or trapped behind a one-way edge). This
module finds the strongly connected components with an iterative Kosaraju
pass and adds the minimal number of edges, max(#sources, #sinks) of the
condensation, that makes the ground layer strongly connected. Each added
edge joins the closest pair of centroids between the two components.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from clustering.kmeans import ClusterModel
from core.distances import nearest_rows
from routing.hnsw_router import RoutingGraph, _points_of

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Condensation:
    """
    SCC condensation of a directed graph.

    Args:
        components: (n,) component id per node; component ids follow a
            topological order of the condensation DAG
        n_components: number of SCCs
        sources: component ids with no incoming edge from another component
        sinks: component ids with no outgoing edge to another component
        successors: component id -> successor component ids in the DAG
    """
    components: np.ndarray
    n_components: int
    sources: List[int]
    sinks: List[int]
    successors: Dict[int, List[int]] = field(default_factory=dict)

    def members(self, component: int) -> np.ndarray:
        return np.flatnonzero(self.components == component)


@dataclass(frozen=True)
class GraphStats:
    indegree_histogram: Dict[int, int]
    scc_count: int
    zero_indegree_count: int


def _adjacency_of(graph: Union[RoutingGraph, Sequence[Sequence[int]]]) -> List[List[int]]:
    if isinstance(graph, RoutingGraph):
        return graph.ground_adjacency()
    return [list(nbrs) for nbrs in graph]


def kosaraju_components(adjacency: Sequence[Sequence[int]]) -> Tuple[np.ndarray, int]:
    """
    Strongly connected components, iterative Kosaraju.

    Components are numbered in the order the second pass discovers them,
    which is a topological order of the condensation.

    Returns:
        ((n,) int64 component ids, component count)
    """
    n = len(adjacency)
    visited = np.zeros(n, dtype=bool)
    finish_order: List[int] = []

    for start in range(n):
        if visited[start]:
            continue
        visited[start] = True
        stack = [(start, iter(adjacency[start]))]
        while stack:
            node, nbrs = stack[-1]
            for nbr in nbrs:
                if not visited[nbr]:
                    visited[nbr] = True
                    stack.append((nbr, iter(adjacency[nbr])))
                    break
            else:
                stack.pop()
                finish_order.append(node)

    reverse: List[List[int]] = [[] for _ in range(n)]
    for node, nbrs in enumerate(adjacency):
        for nbr in nbrs:
            reverse[nbr].append(node)

    components = np.full(n, -1, dtype=np.int64)
    count = 0
    for start in reversed(finish_order):
        if components[start] != -1:
            continue
        components[start] = count
        stack = [start]
        while stack:
            node = stack.pop()
            for prev in reverse[node]:
                if components[prev] == -1:
                    components[prev] = count
                    stack.append(prev)
        count += 1

    return components, count


def condensation(graph: Union[RoutingGraph, Sequence[Sequence[int]]]) -> Condensation:
    """Condense the ground layer (or a plain adjacency list) into its SCC DAG."""
    adjacency = _adjacency_of(graph)
    components, count = kosaraju_components(adjacency)

    has_in = np.zeros(count, dtype=bool)
    has_out = np.zeros(count, dtype=bool)
    successors: Dict[int, Set[int]] = {c: set() for c in range(count)}
    for node, nbrs in enumerate(adjacency):
        src = int(components[node])
        for nbr in nbrs:
            dst = int(components[nbr])
            if src != dst:
                has_out[src] = True
                has_in[dst] = True
                successors[src].add(dst)

    return Condensation(
        components=components,
        n_components=count,
        sources=[int(c) for c in np.flatnonzero(~has_in)],
        sinks=[int(c) for c in np.flatnonzero(~has_out)],
        successors={c: sorted(s) for c, s in successors.items()},
    )


def _find_sink(start: int, successors: Dict[int, List[int]], sink_set: Set[int],
               marked: Set[int]) -> Optional[int]:
    """DFS from a source over unmarked components; returns the first sink reached."""
    if start in marked:
        return None
    marked.add(start)
    if start in sink_set:
        return start
    stack = [iter(successors[start])]
    while stack:
        for nxt in stack[-1]:
            if nxt in marked:
                continue
            marked.add(nxt)
            if nxt in sink_set:
                return nxt
            stack.append(iter(successors[nxt]))
            break
        else:
            stack.pop()
    return None


def plan_augmentation(sources: List[int], sinks: List[int],
                      successors: Dict[int, List[int]]) -> List[Tuple[int, int]]:
    """
    Component-level edges that make a DAG strongly connected (Eswaran-Tarjan).

    Requires #sources <= #sinks; callers reverse the DAG otherwise.

    Returns:
        max(#sources, #sinks) (from component, to component) pairs
    """
    sink_set = set(sinks)
    marked: Set[int] = set()
    matched_sources: List[int] = []
    matched_sinks: List[int] = []
    for source in sources:
        sink = _find_sink(source, successors, sink_set, marked)
        if sink is not None:
            matched_sources.append(source)
            matched_sinks.append(sink)

    p = len(matched_sources)
    matched_source_set = set(matched_sources)
    matched_sink_set = set(matched_sinks)
    s = matched_sources + [c for c in sources if c not in matched_source_set]
    t = matched_sinks + [c for c in sinks if c not in matched_sink_set]
    n_sources, n_sinks = len(s), len(t)

    edges = [(t[i], s[i + 1]) for i in range(p - 1)]
    edges += [(t[i], s[i]) for i in range(p, n_sources)]
    if n_sources < n_sinks:
        edges.append((t[p - 1], t[n_sources]))
        edges += [(t[j], t[j + 1]) for j in range(n_sources, n_sinks - 1)]
        edges.append((t[n_sinks - 1], s[0]))
    else:
        edges.append((t[p - 1], s[0]))
    return edges


def _closest_pair(points: Optional[np.ndarray], tail: np.ndarray,
                  head: np.ndarray) -> Tuple[int, int]:
    """Node pair (u in tail, v in head) with minimum centroid distance."""
    if points is None:
        return int(tail[0]), int(head[0])
    labels, dists = nearest_rows(points[head], points[tail])
    best = int(np.argmin(dists))
    return int(tail[labels[best]]), int(head[best])


def connectivity_augment(graph: RoutingGraph,
                         centroids: Union[ClusterModel, np.ndarray, None] = None
                         ) -> Tuple[RoutingGraph, int]:
    """
    Make the ground layer strongly connected with the minimum number of edges.

    Args:
        graph: Routing graph from build_routing
        centroids: Centroids used to pick the shortest edge between two components;
            without them the lowest node ids are joined

    Returns:
        (augmented graph, edges added); the input graph is returned unchanged when
        it is already strongly connected. Upper layers are shared, not copied.
    """
    cond = condensation(graph)
    if cond.n_components == 1:
        return graph, 0

    n_sources, n_sinks = len(cond.sources), len(cond.sinks)
    if n_sources <= n_sinks:
        component_edges = plan_augmentation(cond.sources, cond.sinks, cond.successors)
    else:
        predecessors: Dict[int, List[int]] = {c: [] for c in range(cond.n_components)}
        for src, dsts in cond.successors.items():
            for dst in dsts:
                predecessors[dst].append(src)
        reversed_edges = plan_augmentation(cond.sinks, cond.sources, predecessors)
        component_edges = [(b, a) for a, b in reversed_edges]

    points = _points_of(centroids) if centroids is not None else None
    ground = {node: list(nbrs) for node, nbrs in graph.layers[0].items()}
    added = 0
    for tail_comp, head_comp in component_edges:
        u, v = _closest_pair(points, cond.members(tail_comp), cond.members(head_comp))
        if v not in ground[u]:
            ground[u].append(v)
            added += 1

    logger.info(
        f"Connectivity augmentation: {cond.n_components} SCCs, {n_sources} sources, "
        f"{n_sinks} sinks -> added {added} edges"
    )
    augmented = RoutingGraph(
        layers=[ground] + list(graph.layers[1:]),
        entry_point=graph.entry_point,
        out_d=graph.out_d,
        node_levels=graph.node_levels,
    )
    return augmented, added


def graph_stats(graph: Union[RoutingGraph, Sequence[Sequence[int]]]) -> GraphStats:
    """Ground-layer in-degree histogram, SCC count and zero-in-degree count."""
    adjacency = _adjacency_of(graph)
    indegree = np.zeros(len(adjacency), dtype=np.int64)
    for nbrs in adjacency:
        for nbr in nbrs:
            indegree[nbr] += 1
    histogram = dict(sorted(Counter(int(x) for x in indegree).items()))
    _, scc_count = kosaraju_components(adjacency)
    return GraphStats(
        indegree_histogram=histogram,
        scc_count=scc_count,
        zero_indegree_count=int((indegree == 0).sum()),
    )
