# analysis/bench_report.py
"""
Post-process bench CSVs: the recall/latency Pareto frontier, the best-VQ row
per recall threshold and the candidate hit-rate curve.
"""

import os
import sys
import logging
from typing import Sequence

import pandas as pd

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from bench.runner import BENCH_COLUMNS
from core.errors import ArgumentError

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = (0.5, 0.8, 0.9, 0.95, 0.99)


def load_bench_csv(path: str) -> pd.DataFrame:
    """
    Read a bench CSV and check its header.

    Raises:
        ArgumentError: Missing file or columns that do not match the bench schema
    """
    if not os.path.exists(path):
        raise ArgumentError(f"Bench CSV not found: {path}")
    rows = pd.read_csv(path)
    missing = [c for c in BENCH_COLUMNS if c not in rows.columns]
    if missing:
        raise ArgumentError(f"{path} is missing bench columns: {', '.join(missing)}")
    return rows


def pareto_frontier(rows: pd.DataFrame, mode: str = None) -> pd.DataFrame:
    """
    Rows not dominated in (higher recall, lower mean latency).

    Returns:
        Frontier sorted by latency ascending; recall strictly increases down the table
    """
    if mode is not None:
        rows = rows[rows['mode'] == mode]
    ordered = rows.sort_values(['latency_ms_mean', 'recall'], ascending=[True, False])
    keep = []
    best_recall = -1.0
    for idx, row in ordered.iterrows():
        if row['recall'] > best_recall:
            keep.append(idx)
            best_recall = row['recall']
    return ordered.loc[keep].reset_index(drop=True)


def best_vq_by_threshold(rows: pd.DataFrame,
                         thresholds: Sequence[float] = DEFAULT_THRESHOLDS) -> pd.DataFrame:
    """Highest-VQ row with recall >= threshold, one row per threshold that any point reaches."""
    picked = []
    for threshold in thresholds:
        qualifying = rows[rows['recall'] >= threshold]
        if qualifying.empty:
            logger.debug(f"No bench row reaches recall {threshold}")
            continue
        best = qualifying.loc[qualifying['vq'].idxmax()].to_dict()
        picked.append({'recall_threshold': threshold, **best})
    return pd.DataFrame(picked, columns=['recall_threshold'] + list(rows.columns))


def hitrate_curve(hitrate_rows: pd.DataFrame) -> pd.DataFrame:
    """Hit-rate table pivoted to one column per k, indexed by r."""
    return hitrate_rows.pivot_table(index='r', columns='k', values='hit_rate').sort_index()


def _print_table(title: str, table: pd.DataFrame) -> None:
    print(title)
    print("-" * 70)
    if table.empty:
        print("  (no rows)")
    else:
        print(table.to_string(index=False, float_format=lambda x: f"{x:.4f}"))
    print()


if __name__ == "__main__":
    """
    Summarise a bench CSV (and optionally a hitrate CSV)
    """
    import argparse

    from utils.config import configure_logging

    configure_logging()
    parser = argparse.ArgumentParser(description='Bench CSV report')
    parser.add_argument('bench_csv', help='CSV written by the bench command')
    parser.add_argument('--hitrate-csv', default=None, help='CSV written by the hitrate command')
    args = parser.parse_args()

    bench_rows = load_bench_csv(args.bench_csv)

    print("=" * 70)
    print("BENCHMARK REPORT")
    print(f"Source: {args.bench_csv} ({len(bench_rows)} rows)")
    print("=" * 70)
    print()

    columns = ['k', 'r', 'nscan', 'ef_search', 'recall', 'latency_ms_mean', 'vq']
    for mode in sorted(bench_rows['mode'].unique()):
        _print_table(f"Pareto frontier ({mode})", pareto_frontier(bench_rows, mode)[columns])

    _print_table("Best VQ per recall threshold",
                 best_vq_by_threshold(bench_rows)[['recall_threshold', 'mode'] + columns])

    if args.hitrate_csv:
        curve = hitrate_curve(pd.read_csv(args.hitrate_csv)).reset_index()
        _print_table("Top-k within top-r hit rate", curve)

    print("=" * 70)
