# bench/cli.py
"""
Command-line interface.

Verbs:
    synth    write a synthetic database + held-out query file
    oracle   exact top-k ground truth for a query file
    build    build an index and its full-view file
    query    answer one query and print ids, distances and stage timings
    bench    recall / latency / memory / VQ over a parameter grid
    tune     two-step (n_cluster, m) then (ef_search, nscan, r) tuning
    hitrate  probability that the true top-k lands in the preview top-r
    graph    routing in-degree histogram before and after augmentation

Exit codes: 0 success, 1 engine error, 2 usage error.
"""

import argparse
import os
import logging
import sys
from typing import List, Optional

from bench.ground_truth import compute_ground_truth, read_ground_truth, write_ground_truth
from bench.runner import graph_table, hitrate_table, param_grid, query_rows, run_grid, write_csv
from bench.tuning import TuneSpec, tune
from core.datasets import generate_synthetic_split, load_dataset, write_dataset
from core.errors import ArgumentError, ZoomError
from core.types import SearchParams, ZoomConfig
from fullview.rerank import autotune_report
from utils.config import configure_logging, load_settings
from zoom.index import build, search
from zoom.serialization import deserialize, serialize

logger = logging.getLogger(__name__)

FORMAT_CHOICES = ['fvecs', 'bvecs', 'raw']


def _banner(title: str) -> None:
    print("=" * 70)
    print(title)
    print("=" * 70)


def cmd_synth(args) -> int:
    database, queries = generate_synthetic_split(
        args.n, args.n_queries, args.d, args.blobs, args.seed
    )
    write_dataset(database, args.dataset, args.format)
    write_dataset(queries, args.queries, args.format)
    print(f"Wrote {database.n} x {database.d} database to {args.dataset}")
    print(f"Wrote {queries.n} queries to {args.queries}")
    return 0


def cmd_oracle(args) -> int:
    dataset = load_dataset(args.dataset, args.format)
    queries = load_dataset(args.queries, args.format)
    truth = compute_ground_truth(dataset, queries, args.k)
    write_ground_truth(truth, args.truth)
    print(f"Wrote exact top-{args.k} for {truth.n_queries} queries to {args.truth}")
    return 0


def cmd_build(args) -> int:
    dataset = load_dataset(args.dataset, args.format)
    config = ZoomConfig(
        n_cluster=args.n_cluster,
        m=args.m,
        l=args.l,
        out_d=args.out_d,
        seed=args.seed,
        ef_construction=args.ef_construction,
        kmeans_max_iters=args.kmeans_iters or load_settings().kmeans_max_iters,
    )
    index = build(dataset, config, args.fullview or f"{args.index}.fvw", io_mode=args.io_mode)
    try:
        size = serialize(index, args.index)
    except ZoomError:
        index.close()
        # a full-view file without its index is unusable
        if os.path.exists(index.fullview.path):
            os.remove(index.fullview.path)
            logger.info(f"Removed orphaned full-view file {index.fullview.path}")
        raise
    index.close()
    _banner("Index built")
    print(f"Index file: {args.index} ({size} bytes)")
    print(f"Full-view file: {index.fullview.path}")
    print(f"Modelled memory: {index.memory_bytes()} bytes")
    print(f"Augmentation edges: {index.augmentation_edges}")
    return 0


def _search_params(args, k=None, r=None, nscan=None, ef=None) -> SearchParams:
    return SearchParams(
        k=k if k is not None else args.k,
        r=r if r is not None else args.r,
        nscan=nscan if nscan is not None else args.nscan,
        ef_search=ef if ef is not None else args.ef_search,
        preview_only=args.preview_only,
        exhaustive_routing=args.exhaustive_routing,
    )


def cmd_query(args) -> int:
    queries = load_dataset(args.queries, args.format)
    if not 0 <= args.query_row < queries.n:
        raise ArgumentError(f"--query-row {args.query_row} outside [0, {queries.n})")
    index = deserialize(args.index, io_mode=args.io_mode)
    try:
        result = search(index, queries.row(args.query_row), _search_params(args))
    finally:
        index.close()
    table = query_rows(result)
    if args.out:
        write_csv(table, args.out)
    print(table.to_csv(index=False), end='')
    return 0


def cmd_bench(args) -> int:
    queries = load_dataset(args.queries, args.format)
    truth = read_ground_truth(args.truth)
    index = deserialize(args.index, io_mode=args.io_mode)
    try:
        grid = param_grid(args.k, args.r, args.nscan, args.ef_search,
                          n_cluster=index.config.n_cluster,
                          preview_only=args.preview_only,
                          exhaustive_routing=args.exhaustive_routing)
        if args.autotune and not args.preview_only:
            tuned = autotune_report(index.fullview, max(p.r for p in grid))
            index.rerank_batch = tuned.plan.b
            print(f"Autotuned rerank batch size: {tuned.plan.b}")
        report = run_grid(index, queries, truth, grid, threads=args.threads)
    finally:
        index.close()
    _banner(f"Benchmark: {args.index} ({queries.n} queries, io_mode={index.fullview.io_mode})")
    print(report.to_table())
    if args.out:
        report.to_csv(args.out)
    return 0


def cmd_tune(args) -> int:
    dataset = load_dataset(args.dataset, args.format)
    queries = load_dataset(args.queries, args.format)
    truth = read_ground_truth(args.truth)
    spec = TuneSpec(
        memory_target_bytes=args.mot,
        recall_target=args.recall_target,
        k=args.k,
        ef_grid=tuple(args.ef_grid),
        nscan_grid=tuple(args.nscan_grid),
        r_grid=tuple(args.r_grid),
    )
    result = tune(spec, dataset, queries, truth, args.workdir,
                  ZoomConfig(seed=args.seed), io_mode=args.io_mode)
    if args.out:
        write_csv(result.report, args.out)

    _banner("Tuning result")
    if not result.success:
        print(f"No configuration reached recall {spec.recall_target} "
              f"after {result.escalations} MOT escalations (final MOT {result.mot} bytes)")
        if result.row:
            print(f"Best recall seen: {result.row['recall']:.4f} "
                  f"(n_cluster={result.row['n_cluster']}, m={result.row['m']})")
        return 1
    print(f"n_cluster={result.config.n_cluster} m={result.config.m} l={result.config.l}")
    print(f"nscan={result.params.nscan} ef_search={result.params.ef_search} r={result.params.r}")
    print(f"recall={result.row['recall']:.4f} latency={result.row['latency_ms_mean']:.3f} ms "
          f"memory={result.row['memory_bytes']} bytes vq={result.row['vq']:.3e}")
    print(f"MOT used: {result.mot} bytes ({result.escalations} escalations)")
    return 0


def cmd_hitrate(args) -> int:
    queries = load_dataset(args.queries, args.format)
    truth = read_ground_truth(args.truth)
    index = deserialize(args.index, io_mode=args.io_mode)
    try:
        table = hitrate_table(index, queries, truth, args.k, args.r, args.nscan, args.ef_search)
    finally:
        index.close()
    _banner(f"Top-{args.k} in preview top-r (nscan={args.nscan})")
    print(table.to_string(index=False))
    if args.out:
        write_csv(table, args.out)
    return 0


def cmd_graph(args) -> int:
    index = deserialize(args.index, io_mode=args.io_mode, verify_checksum=False)
    try:
        table = graph_table(index)
    finally:
        index.close()
    _banner("Routing graph in-degree histogram")
    print(f"SCCs: {table.attrs['scc_before']} -> {table.attrs['scc_after']}")
    print(f"Zero in-degree clusters: {table.attrs['zero_indegree_before']} -> "
          f"{table.attrs['zero_indegree_after']}")
    print(table.to_string(index=False))
    if args.out:
        write_csv(table, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--format', choices=FORMAT_CHOICES, default='fvecs', help='Vector file format')
    common.add_argument('--io-mode', choices=['direct', 'buffered'], default=None,
                        help='Full-view read path (default from ZOOM_IO_MODE)')
    common.add_argument('--seed', type=int, default=42, help='RNG seed')
    common.add_argument('--log-level', default=None, help='Logging level (default from ZOOM_LOG_LEVEL)')

    search_flags = argparse.ArgumentParser(add_help=False)
    search_flags.add_argument('--preview-only', action='store_true',
                              help='Return preview top-k without full-view rerank')
    search_flags.add_argument('--exhaustive-routing', action='store_true',
                              help='Select clusters by exact centroid scan')

    parser = argparse.ArgumentParser(prog='zoom', description='Multi-view ANN index tools')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common], help='Generate a synthetic dataset')
    p.add_argument('--n', type=int, default=50000, help='Database vectors')
    p.add_argument('--n-queries', type=int, default=1000, help='Held-out queries')
    p.add_argument('--d', type=int, default=32, help='Dimensionality')
    p.add_argument('--blobs', type=int, default=64, help='Gaussian blobs')
    p.add_argument('--dataset', required=True, help='Database output path')
    p.add_argument('--queries', required=True, help='Query output path')
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser('oracle', parents=[common], help='Compute exact ground truth')
    p.add_argument('--dataset', required=True)
    p.add_argument('--queries', required=True)
    p.add_argument('--k', type=int, default=100)
    p.add_argument('--truth', required=True, help='Ground-truth output path')
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser('build', parents=[common], help='Build an index')
    p.add_argument('--dataset', required=True)
    p.add_argument('--index', required=True, help='Index output path')
    p.add_argument('--fullview', default=None, help='Full-view output path (default <index>.fvw)')
    p.add_argument('--n-cluster', type=int, default=1024)
    p.add_argument('--m', type=int, default=8)
    p.add_argument('--l', type=int, default=256)
    p.add_argument('--out-d', type=int, default=10)
    p.add_argument('--ef-construction', type=int, default=40)
    p.add_argument('--kmeans-iters', type=int, default=None)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser('query', parents=[common, search_flags], help='Answer one query')
    p.add_argument('--index', required=True)
    p.add_argument('--queries', required=True)
    p.add_argument('--query-row', type=int, default=0)
    p.add_argument('--k', type=int, default=10)
    p.add_argument('--r', type=int, default=50)
    p.add_argument('--nscan', type=int, default=64)
    p.add_argument('--ef-search', type=int, default=320)
    p.add_argument('--out', default=None, help='CSV output path')
    p.set_defaults(func=cmd_query)

    p = sub.add_parser('bench', parents=[common, search_flags], help='Benchmark a parameter grid')
    p.add_argument('--index', required=True)
    p.add_argument('--queries', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--k', type=int, nargs='+', default=[10])
    p.add_argument('--r', type=int, nargs='+', default=[50])
    p.add_argument('--nscan', type=int, nargs='+', default=[16, 32, 64])
    p.add_argument('--ef-search', type=int, nargs='+', default=[320])
    p.add_argument('--threads', type=int, default=1, help='Concurrent query workers')
    p.add_argument('--autotune', action='store_true', help='Autotune the rerank batch size first')
    p.add_argument('--out', default=None, help='CSV output path')
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser('tune', parents=[common], help='Two-step parameter tuning')
    p.add_argument('--dataset', required=True)
    p.add_argument('--queries', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--mot', type=int, required=True, help='Memory target in bytes')
    p.add_argument('--recall-target', type=float, default=0.95)
    p.add_argument('--k', type=int, default=1)
    p.add_argument('--ef-grid', type=int, nargs='+', default=[64, 128, 320])
    p.add_argument('--nscan-grid', type=int, nargs='+', default=[8, 16, 32, 64])
    p.add_argument('--r-grid', type=int, nargs='+', default=[10, 50, 100])
    p.add_argument('--workdir', default='tune_work', help='Directory for candidate builds')
    p.add_argument('--out', default=None, help='CSV output path for every evaluated point')
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser('hitrate', parents=[common], help='Top-k in top-r probability table')
    p.add_argument('--index', required=True)
    p.add_argument('--queries', required=True)
    p.add_argument('--truth', required=True)
    p.add_argument('--k', type=int, default=1)
    p.add_argument('--r', type=int, nargs='+', default=[1, 10, 50, 100])
    p.add_argument('--nscan', type=int, default=64)
    p.add_argument('--ef-search', type=int, default=320)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_hitrate)

    p = sub.add_parser('graph', parents=[common], help='Routing in-degree histogram')
    p.add_argument('--index', required=True)
    p.add_argument('--out', default=None)
    p.set_defaults(func=cmd_graph)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except ZoomError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
