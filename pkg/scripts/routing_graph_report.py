# scripts/routing_graph_report.py
"""
Report how many routing-graph nodes are unreachable before connectivity
augmentation and confirm the augmented graph is strongly connected.

Centroids are drawn as Gaussian blobs so the report runs without a dataset.
networkx is used as an independent check of the SCC count.

Usage:
    python scripts/routing_graph_report.py --n-cluster 20000 --d 128
"""

import os
import sys
import argparse

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import networkx as nx

from core.datasets import generate_synthetic
from routing.connectivity import connectivity_augment, graph_stats
from routing.hnsw_router import build_routing
from utils.config import configure_logging


def _networkx_scc_count(graph) -> int:
    digraph = nx.DiGraph()
    digraph.add_nodes_from(range(graph.n_nodes))
    for node, nbrs in enumerate(graph.ground_adjacency()):
        digraph.add_edges_from((node, nbr) for nbr in nbrs)
    return nx.number_strongly_connected_components(digraph)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description='Routing graph connectivity report')
    parser.add_argument('--n-cluster', type=int, default=20000, help='Centroids')
    parser.add_argument('--d', type=int, default=128, help='Dimension')
    parser.add_argument('--out-d', type=int, default=10, help='Out-degree')
    parser.add_argument('--ef-construction', type=int, default=40, help='Build queue bound')
    parser.add_argument('--blobs', type=int, default=200, help='Blobs the centroids are drawn from')
    parser.add_argument('--seed', type=int, default=42, help='RNG seed')
    args = parser.parse_args(argv)

    configure_logging()
    centroids = generate_synthetic(args.n_cluster, args.d, args.blobs, args.seed).data
    raw = build_routing(centroids, args.out_d, args.ef_construction, args.seed)
    augmented, added = connectivity_augment(raw, centroids)
    before, after = graph_stats(raw), graph_stats(augmented)

    print("=" * 70)
    print("Routing Graph Connectivity Report")
    print("=" * 70)
    print()
    print(f"Nodes: {raw.n_nodes:,}  Layers: {raw.n_layers}  OutD: {args.out_d}")
    print()
    print(f"{'':28s}{'before':>12s}{'after':>12s}")
    print("-" * 70)
    print(f"{'Strongly connected comps':28s}{before.scc_count:>12,}{after.scc_count:>12,}")
    print(f"{'Zero in-degree nodes':28s}{before.zero_indegree_count:>12,}{after.zero_indegree_count:>12,}")
    print(f"{'Ground-layer edges':28s}{raw.edge_count(0):>12,}{augmented.edge_count(0):>12,}")
    print(f"{'Edges added':28s}{'':>12s}{added:>12,}")
    print()

    print("In-degree histogram (before augmentation):")
    for degree, count in before.indegree_histogram.items():
        print(f"  {degree:4d}: {count:6,d} nodes")
    print()

    nx_count = _networkx_scc_count(augmented)
    if after.scc_count == 1 and nx_count == 1:
        print(" AUGMENTED GRAPH IS STRONGLY CONNECTED")
    else:
        print(f"  NOT STRONGLY CONNECTED (kosaraju={after.scc_count}, networkx={nx_count})")
    print()
    print("=" * 70)
    return 0 if after.scc_count == 1 and nx_count == 1 else 1


if __name__ == "__main__":
    sys.exit(main())
