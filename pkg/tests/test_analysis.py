# tests/test_analysis.py
import pandas as pd
import pytest

from analysis.bench_report import (best_vq_by_threshold, hitrate_curve, load_bench_csv,
                                   pareto_frontier)
from bench.runner import BENCH_COLUMNS
from core.errors import ArgumentError


def _row(recall, latency, vq, mode='full', nscan=8):
    row = dict.fromkeys(BENCH_COLUMNS, 0)
    row.update({'k': 10, 'r': 50, 'nscan': nscan, 'ef_search': 64, 'mode': mode,
                'recall': recall, 'latency_ms_mean': latency, 'vq': vq})
    return row


@pytest.fixture
def rows():
    return pd.DataFrame([
        _row(0.70, 1.0, 900.0, nscan=4),
        _row(0.85, 2.0, 500.0, nscan=8),
        _row(0.80, 3.0, 300.0, nscan=16),   # dominated by the nscan=8 row
        _row(0.97, 4.0, 200.0, nscan=32),
        _row(0.60, 0.5, 1500.0, mode='preview_only'),
    ], columns=BENCH_COLUMNS)


def test_pareto_frontier(rows):
    frontier = pareto_frontier(rows, mode='full')
    assert frontier['nscan'].tolist() == [4, 8, 32]
    assert frontier['recall'].is_monotonic_increasing
    assert len(pareto_frontier(rows)) == 4


def test_best_vq_by_threshold(rows):
    table = best_vq_by_threshold(rows, thresholds=(0.5, 0.8, 0.95, 0.99))
    assert table['recall_threshold'].tolist() == [0.5, 0.8, 0.95]
    assert table['vq'].tolist() == [1500.0, 500.0, 200.0]
    assert list(table.columns) == ['recall_threshold'] + BENCH_COLUMNS


def test_hitrate_curve():
    table = pd.DataFrame({'k': [1, 1, 10, 10], 'r': [10, 50, 10, 50],
                          'hit_rate': [0.9, 1.0, 0.6, 0.95]})
    curve = hitrate_curve(table)
    assert curve.index.tolist() == [10, 50]
    assert curve.loc[50, 10] == 0.95


def test_load_bench_csv(rows, tmp_path):
    path = tmp_path / "bench.csv"
    rows.to_csv(path, index=False)
    assert load_bench_csv(str(path)).shape == rows.shape

    rows.drop(columns=['vq']).to_csv(path, index=False)
    with pytest.raises(ArgumentError):
        load_bench_csv(str(path))
    with pytest.raises(ArgumentError):
        load_bench_csv(str(tmp_path / "absent.csv"))
