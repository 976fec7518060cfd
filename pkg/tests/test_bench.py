# tests/test_bench.py
import math

import numpy as np
import pandas as pd
import pytest

from bench.ground_truth import (GroundTruth, compute_ground_truth, read_ground_truth,
                                write_ground_truth)
from bench.runner import (BENCH_COLUMNS, QUERY_COLUMNS, graph_table, hitrate_table, param_grid,
                          query_recall, query_rows, run_grid, run_point, write_csv)
from bench.tuning import TuneSpec, candidate_configs, minimal_memory_cost, tune
from core.datasets import generate_synthetic_split
from core.errors import ArgumentError, FormatError, StorageError, TuningError
from core.metrics import memory_cost
from core.types import SearchParams, ZoomConfig
from zoom.index import search

PARAMS = SearchParams(k=5, r=40, nscan=4, ef_search=16)

tune_n = 1000
tune_d = 8
# (32, 1) costs 15,496 bytes and (32, 2) 16,496; everything else is above 17,000
TWO_CONFIG_MOT = 17_000


@pytest.fixture(scope="module")
def truth(database, queries):
    return compute_ground_truth(database, queries, 10)


@pytest.fixture(scope="module")
def tune_data():
    return generate_synthetic_split(tune_n, 20, tune_d, 8, seed=31)


def _small_spec(mot, recall_target=0.0):
    return TuneSpec(memory_target_bytes=mot, recall_target=recall_target, k=1,
                    ef_grid=(32,), nscan_grid=(4, 8), r_grid=(10,))


def test_ground_truth_file_roundtrip_and_bytes(truth, database, queries, tmp_path):
    first = str(tmp_path / "a.gt")
    second = str(tmp_path / "b.gt")
    write_ground_truth(truth, first)
    write_ground_truth(compute_ground_truth(database, queries, 10), second)
    with open(first, 'rb') as f, open(second, 'rb') as g:
        assert f.read() == g.read()

    loaded = read_ground_truth(first)
    np.testing.assert_array_equal(loaded.ids, truth.ids)
    np.testing.assert_array_equal(loaded.distances, truth.distances)
    assert (loaded.n_queries, loaded.k) == (queries.n, 10)
    with pytest.raises(ArgumentError):
        loaded.top(0, 11)


def test_ground_truth_errors(tmp_path, truth):
    with pytest.raises(ArgumentError):
        read_ground_truth(str(tmp_path / "absent.gt"))
    path = tmp_path / "bad.gt"
    write_ground_truth(truth, str(path))
    raw = bytearray(path.read_bytes())
    raw[:4] = b'ZGT9'
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        read_ground_truth(str(path))


def test_param_grid_skips_invalid_points():
    grid = param_grid([1, 10], [5, 50], [4, 64], [32], n_cluster=32)
    assert all(p.k <= p.r and p.nscan <= p.ef_search <= 32 for p in grid)
    assert {(p.k, p.r) for p in grid} == {(1, 5), (1, 50), (10, 50)}
    with pytest.raises(ArgumentError):
        param_grid([10], [5], [4], [32])


def test_run_point_row(built_index, queries, truth):
    row = run_point(built_index, queries, truth, PARAMS, machine_memory_bytes=2 ** 30)
    assert list(row) == BENCH_COLUMNS
    assert 0.0 <= row['recall'] <= 1.0
    assert row['memory_bytes'] == built_index.memory_bytes()
    assert row['latency_ms_p99'] > 0
    assert row['vq'] > 0
    assert row['n_queries'] == queries.n
    assert row['mode'] == 'full'


def test_run_point_rejects_short_truth(built_index, queries, truth):
    short = GroundTruth(truth.ids[:, :3], truth.distances[:, :3])
    with pytest.raises(ArgumentError):
        run_point(built_index, queries, short, PARAMS)


def test_run_grid_report(built_index, queries, truth, tmp_path):
    grid = param_grid([5], [10, 40], [4], [16], n_cluster=32)
    report = run_grid(built_index, queries, truth, grid, threads=2, warmup=False)
    assert list(report.rows.columns) == BENCH_COLUMNS
    assert len(report.rows) == 2
    path = tmp_path / "bench.csv"
    report.to_csv(str(path))
    assert path.read_text().splitlines()[0] == ','.join(BENCH_COLUMNS)


def test_query_rows_and_recall(built_index, queries):
    result = search(built_index, queries.data[0], PARAMS)
    table = query_rows(result)
    assert list(table.columns) == QUERY_COLUMNS
    assert table['rank'].tolist() == list(range(1, PARAMS.k + 1))
    assert query_recall([1, 2], [1, 2, 3, 4], 4) == 0.5


def test_hitrate_table_is_monotone(built_index, queries, truth):
    table = hitrate_table(built_index, queries, truth, 10, [10, 40, 100], nscan=4, ef_search=16)
    assert table['r'].tolist() == [10, 40, 100]
    rates = table['hit_rate'].tolist()
    assert rates == sorted(rates)


def test_graph_table(built_index):
    table = graph_table(built_index)
    assert table.attrs['scc_after'] == 1
    assert table.attrs['zero_indegree_after'] == 0
    assert table['nodes_before'].sum() == table['nodes_after'].sum() == 32


def test_candidate_configs_fit_the_target():
    configs = candidate_configs(tune_n, tune_d, TWO_CONFIG_MOT)
    assert [(c.n_cluster, c.m) for c in configs] == [(32, 1), (32, 2)]
    costs = [memory_cost(c, tune_n, tune_d) for c in configs]
    assert costs == sorted(costs)
    assert minimal_memory_cost(tune_n, tune_d) == 15_496


def test_invalid_tune_spec():
    with pytest.raises(TuningError):
        TuneSpec(memory_target_bytes=1000, recall_target=1.5)
    with pytest.raises(TuningError):
        TuneSpec(memory_target_bytes=0, recall_target=0.5)
    with pytest.raises(TuningError):
        TuneSpec(memory_target_bytes=1000, recall_target=0.5, r_grid=())


def test_tune_picks_highest_vq(tune_data, tmp_path):
    database, queries = tune_data
    truth = compute_ground_truth(database, queries, 1)
    result = tune(_small_spec(TWO_CONFIG_MOT), database, queries, truth, str(tmp_path),
                  io_mode='buffered')
    assert result.success
    assert result.escalations == 0
    assert result.candidates_built == [(32, 1), (32, 2)]
    assert result.row['vq'] == result.report['vq'].max()
    assert (result.config.n_cluster, result.config.m) == (result.row['n_cluster'], result.row['m'])
    assert memory_cost(result.config, tune_n, tune_d) <= TWO_CONFIG_MOT


def test_tune_escalates_the_memory_target(tune_data, tmp_path):
    database, queries = tune_data
    truth = compute_ground_truth(database, queries, 1)
    mot = math.ceil(minimal_memory_cost(tune_n, tune_d) / 1.2)
    result = tune(_small_spec(mot), database, queries, truth, str(tmp_path), io_mode='buffered')
    assert result.success
    assert result.escalations == 1
    assert result.candidates_built == [(32, 1)]


def test_tune_reports_failure_as_a_result(tune_data, tmp_path):
    database, queries = tune_data
    truth = compute_ground_truth(database, queries, 1)
    result = tune(_small_spec(1), database, queries, truth, str(tmp_path), io_mode='buffered')
    assert not result.success
    assert result.row == {}
    assert result.report.empty
    assert result.config is None


def test_scan_time_grows_with_nscan(built_index, queries, truth):
    times = []
    for nscan in (8, 16, 32):
        params = SearchParams(k=1, r=100, nscan=nscan, ef_search=32)
        row = run_point(built_index, queries, truth, params, machine_memory_bytes=2 ** 30)
        times.append(row['t_vs_ms'])
    assert times[0] < times[1] < times[2]


def test_query_csv_schema(built_index, queries, database, tmp_path):
    params = SearchParams(k=5, r=40, nscan=8, ef_search=16, preview_only=True)
    table = query_rows(search(built_index, queries.data[3], params))
    path = tmp_path / "query.csv"
    write_csv(table, str(path))

    lines = path.read_text().splitlines()
    assert lines[0] == "rank,id,distance,t_cs_us,t_vs_us,t_rerank_us"
    assert len(lines) == 1 + params.k
    loaded = pd.read_csv(path)
    assert loaded['rank'].tolist() == [1, 2, 3, 4, 5]
    assert loaded['id'].dtype.kind == 'i'
    assert loaded['id'].between(0, database.n - 1).all()
    assert loaded['distance'].is_monotonic_increasing
    assert (loaded['t_rerank_us'] == 0).all()
    assert (loaded['t_cs_us'] > 0).all() and (loaded['t_vs_us'] > 0).all()
    # stage timings are per query, so every row repeats them
    assert loaded['t_vs_us'].nunique() == 1


def test_tune_evaluates_each_config_once(tune_data, tmp_path):
    database, queries = tune_data
    # no query can be answered, so every attempt escalates
    unreachable = GroundTruth(np.full((queries.n, 1), -1, dtype=np.int64),
                              np.zeros((queries.n, 1)))
    mot = math.ceil(minimal_memory_cost(tune_n, tune_d) / 1.2)
    result = tune(_small_spec(mot, recall_target=0.5), database, queries, unreachable,
                  str(tmp_path), io_mode='buffered')
    assert not result.success
    assert result.escalations == 3
    keys = ['n_cluster', 'm', 'r', 'nscan', 'ef_search']
    assert not result.report.duplicated(subset=keys).any()
    assert len(result.report) == 2 * len(result.candidates_built)
    assert result.report.groupby(['n_cluster', 'm'])['attempt'].nunique().eq(1).all()


def test_write_csv_raises_storage_error(tmp_path):
    table = pd.DataFrame({'k': [1]})
    with pytest.raises(StorageError):
        write_csv(table, str(tmp_path / "missing" / "out.csv"))
