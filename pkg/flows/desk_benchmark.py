# flows/desk_benchmark.py
"""
Prefect flow for the desk benchmark: data -> ground truth -> index -> bench grid.
"""

import os
import sys
import logging
from typing import Optional

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from prefect import flow, task
from prefect.cache_policies import NO_CACHE

from bench.ground_truth import compute_ground_truth, write_ground_truth
from bench.runner import param_grid, run_grid, write_csv
from core.datasets import generate_synthetic_split, load_dataset
from core.types import ZoomConfig
from utils.config import configure_logging
from zoom.index import build, validate_index
from zoom.serialization import serialize

logger = logging.getLogger(__name__)


@task(cache_policy=NO_CACHE)
def prepare_data_task(dataset_path: Optional[str] = None, queries_path: Optional[str] = None, fmt: str = 'fvecs',
                      n: int = 50000, n_queries: int = 1000, d: int = 32, blobs: int = 64,
                      seed: int = 42):
    """
    Load the database and query files, or synthesise them when no paths are given.

    Returns:
        (database, queries) VectorDatasets
    """
    if dataset_path and queries_path:
        logger.info(f"Loading {dataset_path} and {queries_path}")
        return load_dataset(dataset_path, fmt), load_dataset(queries_path, fmt)
    logger.info(f"Synthesising {n} x {d} database with {n_queries} held-out queries")
    return generate_synthetic_split(n, n_queries, d, blobs, seed)


@task(retries=1, retry_delay_seconds=10, cache_policy=NO_CACHE)
def ground_truth_task(database, queries, k: int, truth_path: str):
    """
    Exact top-k for every query, also written to truth_path.

    Returns:
        GroundTruth
    """
    truth = compute_ground_truth(database, queries, k)
    write_ground_truth(truth, truth_path)
    return truth


@task(retries=1, retry_delay_seconds=10, cache_policy=NO_CACHE)
def build_index_task(database, config: ZoomConfig, workdir: str):
    """
    Build, validate and serialize the index.

    Returns:
        ZoomIndex (open full-view store)
    """
    index = build(database, config, os.path.join(workdir, 'desk.fvw'))
    validate_index(index)
    serialize(index, os.path.join(workdir, 'desk.zoom'))
    return index


@task(cache_policy=NO_CACHE)
def bench_task(index, queries, truth, k_values, r_values, nscan_values, ef_values,
               out_path: str):
    """
    Run the full and preview-only grids.

    Returns:
        pandas DataFrame of every bench row
    """
    import pandas as pd

    frames = []
    for preview_only in (False, True):
        grid = param_grid(k_values, r_values, nscan_values, ef_values,
                          n_cluster=index.config.n_cluster, preview_only=preview_only)
        frames.append(run_grid(index, queries, truth, grid).rows)
    rows = pd.concat(frames, ignore_index=True)
    write_csv(rows, out_path)
    return rows


@task(cache_policy=NO_CACHE)
def summary_task(rows, index):
    """Print the benchmark table and the best full-pipeline row."""
    print("\n" + "=" * 70)
    print("DESK BENCHMARK SUMMARY")
    print("=" * 70)
    print()
    print(f"Vectors: {index.n}  Dimension: {index.d}")
    print(f"Clusters: {index.config.n_cluster}  m={index.config.m}  l={index.config.l}")
    print(f"Modelled memory: {index.memory_bytes()} bytes")
    print(f"Augmentation edges: {index.augmentation_edges}")
    print()
    print(rows.to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    print()

    full = rows[rows['mode'] == 'full']
    summary = {'rows': len(rows)}
    if not full.empty:
        best = full.loc[full['recall'].idxmax()]
        summary['best_recall'] = float(best['recall'])
        summary['best_nscan'] = int(best['nscan'])
        print(f"Best full-pipeline recall: {best['recall']:.4f} at nscan={int(best['nscan'])}, "
              f"r={int(best['r'])} ({best['latency_ms_mean']:.3f} ms)")
    print("=" * 70)
    return summary


@flow(name="Desk Benchmark", log_prints=True)
def desk_benchmark_flow(workdir: str = 'desk_run', dataset_path: Optional[str] = None,
                        queries_path: Optional[str] = None, fmt: str = 'fvecs', n: int = 50000,
                        n_queries: int = 1000, d: int = 32, blobs: int = 64,
                        n_cluster: int = 2000, m: int = 8, l: int = 256, seed: int = 42,
                        k_values=(1, 10), r_values=(10, 100), nscan_values=(16, 32, 64, 128),
                        ef_values=(320,)):
    """
    Main Prefect flow for the desk benchmark.

    Workflow:
        1. Load or synthesise data
        2. Exact ground truth
        3. Build, validate and serialize the index
        4. Benchmark full and preview-only grids
        5. Print summary

    Returns:
        Summary dictionary
    """
    os.makedirs(workdir, exist_ok=True)
    logger.info(f"Starting desk benchmark flow in {workdir}")

    database, queries = prepare_data_task(dataset_path, queries_path, fmt, n, n_queries, d, blobs, seed)
    truth = ground_truth_task(database, queries, max(k_values), os.path.join(workdir, 'truth.zgt'))
    config = ZoomConfig(n_cluster=n_cluster, m=m, l=l, seed=seed)
    index = build_index_task(database, config, workdir)
    try:
        rows = bench_task(index, queries, truth, list(k_values), list(r_values),
                          list(nscan_values), list(ef_values), os.path.join(workdir, 'bench.csv'))
        summary = summary_task(rows, index)
    finally:
        index.close()

    logger.info("Desk benchmark flow complete")
    return summary


if __name__ == "__main__":
    """
    Run the desk benchmark
    """
    import argparse

    configure_logging()
    parser = argparse.ArgumentParser(description='Desk benchmark flow')
    parser.add_argument('--workdir', default='desk_run', help='Output directory')
    parser.add_argument('--n', type=int, default=50000, help='Synthetic database size')
    parser.add_argument('--n-queries', type=int, default=1000, help='Synthetic query count')
    parser.add_argument('--n-cluster', type=int, default=2000, help='First-level clusters')
    parser.add_argument('--m', type=int, default=8, help='PQ sub-dimensions')
    args = parser.parse_args()

    result = desk_benchmark_flow(workdir=args.workdir, n=args.n, n_queries=args.n_queries,
                                 n_cluster=args.n_cluster, m=args.m)
