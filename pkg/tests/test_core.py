# tests/test_core.py
import numpy as np
import pytest
from scipy.spatial.distance import cdist

from core.datasets import RAW_HEADER, generate_synthetic, load_dataset, write_dataset
from core.distances import nearest_rows, pairwise_squared_l2, squared_l2_rows
from core.errors import ArgumentError, FormatError, StorageError
from core.metrics import (candidate_hit_rate, memory_breakdown, memory_cost, recall, vq,
                          vq_improvement)
from core.oracle import exact_topk, exact_topk_batch
from core.types import SearchParams, VectorDataset, ZoomConfig


def test_dataset_is_read_only_float32_copy():
    source = np.arange(12, dtype=np.float64).reshape(3, 4)
    dataset = VectorDataset(source)
    assert dataset.data.dtype == np.float32
    assert (dataset.n, dataset.d) == (3, 4)
    with pytest.raises(ValueError):
        dataset.data[0, 0] = 5.0
    source[0, 0] = 99.0
    assert dataset.data[0, 0] == 0.0


@pytest.mark.parametrize("bad", [
    np.zeros(5, dtype=np.float32),
    np.zeros((0, 3), dtype=np.float32),
    np.array([[1.0, np.nan]], dtype=np.float32),
])
def test_dataset_rejects_malformed_arrays(bad):
    with pytest.raises(ArgumentError):
        VectorDataset(bad)


def test_search_params_preconditions():
    with pytest.raises(ArgumentError):
        SearchParams(k=20, r=10)
    with pytest.raises(ArgumentError):
        SearchParams(nscan=64, ef_search=32)
    assert SearchParams(preview_only=True).mode == 'preview_only'
    assert SearchParams(exhaustive_routing=True).mode == 'full+exhaustive'


def test_config_dimension_check():
    ZoomConfig(m=8).check_dimension(32)
    with pytest.raises(ArgumentError):
        ZoomConfig(m=6).check_dimension(32)
    with pytest.raises(ArgumentError):
        ZoomConfig(l=300)


def test_fvecs_written_file_reads_back(tmp_path):
    dataset = generate_synthetic(50, 6, 3, seed=1)
    path = str(tmp_path / "base.fvecs")
    write_dataset(dataset, path, 'fvecs')
    loaded = load_dataset(path, 'fvecs')
    np.testing.assert_array_equal(loaded.data, dataset.data)
    # each record: 4-byte header + 6 floats
    with open(path, 'rb') as f:
        assert len(f.read()) == 50 * (4 + 6 * 4)


def test_bvecs_and_raw_formats(tmp_path):
    data = np.random.default_rng(0).integers(0, 256, size=(20, 4)).astype(np.float32)
    dataset = VectorDataset(data)
    write_dataset(dataset, str(tmp_path / "b.bvecs"), 'bvecs')
    write_dataset(dataset, str(tmp_path / "r.bin"), 'raw')
    np.testing.assert_array_equal(load_dataset(str(tmp_path / "b.bvecs"), 'bvecs').data, data)
    np.testing.assert_array_equal(load_dataset(str(tmp_path / "r.bin"), 'raw_f32').data, data)


def test_bvecs_rejects_fractional_values(tmp_path):
    with pytest.raises(ArgumentError):
        write_dataset(VectorDataset(np.array([[0.5, 1.0]])), str(tmp_path / "x.bvecs"), 'bvecs')


def test_truncated_fvecs_reports_offset(tmp_path):
    path = tmp_path / "bad.fvecs"
    record = np.array([3], dtype='<i4').tobytes() + np.ones(3, dtype='<f4').tobytes()
    path.write_bytes(record * 2 + record[:7])
    with pytest.raises(FormatError) as excinfo:
        load_dataset(str(path), 'fvecs')
    assert excinfo.value.offset == 2 * len(record)


def test_inconsistent_dimension_reports_record(tmp_path):
    path = tmp_path / "mixed.fvecs"
    good = np.array([2], dtype='<i4').tobytes() + np.ones(2, dtype='<f4').tobytes()
    bad = np.array([5], dtype='<i4').tobytes() + np.ones(2, dtype='<f4').tobytes()
    path.write_bytes(good + bad + good)
    with pytest.raises(FormatError) as excinfo:
        load_dataset(str(path), 'fvecs')
    assert excinfo.value.offset == len(good)


def test_missing_dataset_and_unknown_format(tmp_path):
    with pytest.raises(ArgumentError):
        load_dataset(str(tmp_path / "absent.fvecs"))
    with pytest.raises(ArgumentError):
        load_dataset(str(tmp_path / "absent.fvecs"), 'hdf5')


def test_non_finite_value_reports_its_offset(tmp_path):
    d = 4
    values = np.ones((3, d), dtype='<f4')
    values[1, 2] = np.nan
    records = np.empty(3, dtype=np.dtype([('d', '<i4'), ('v', '<f4', (d,))]))
    records['d'] = d
    records['v'] = values
    path = tmp_path / "nan.fvecs"
    path.write_bytes(records.tobytes())
    with pytest.raises(FormatError) as excinfo:
        load_dataset(str(path), 'fvecs')
    assert excinfo.value.offset == 1 * (4 + 4 * d) + 4 + 2 * 4

    raw = tmp_path / "inf.raw"
    values[1, 2] = 1.0
    values[2, 0] = np.inf
    raw.write_bytes(np.array([(3, d)], dtype=RAW_HEADER).tobytes() + values.tobytes())
    with pytest.raises(FormatError) as excinfo:
        load_dataset(str(raw), 'raw')
    assert excinfo.value.offset == RAW_HEADER.itemsize + (2 * d + 0) * 4


def test_unwritable_dataset_path(tmp_path):
    dataset = generate_synthetic(10, 4, 2, seed=1)
    with pytest.raises(StorageError):
        write_dataset(dataset, str(tmp_path / "missing" / "base.fvecs"))


def test_synthetic_is_deterministic():
    a = generate_synthetic(100, 8, 4, seed=9)
    b = generate_synthetic(100, 8, 4, seed=9)
    c = generate_synthetic(100, 8, 4, seed=10)
    np.testing.assert_array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_distance_kernels_match_scipy(rng):
    x = rng.normal(size=(40, 12)).astype(np.float32)
    y = rng.normal(size=(7, 12)).astype(np.float32)
    expected = cdist(x.astype(np.float64), y.astype(np.float64), 'sqeuclidean')
    np.testing.assert_array_almost_equal(pairwise_squared_l2(x, y), expected, decimal=8)
    np.testing.assert_array_almost_equal(squared_l2_rows(y, x[0]), expected[0], decimal=10)

    labels, dists = nearest_rows(x, y, block_rows=16)
    np.testing.assert_array_equal(labels, expected.argmin(axis=1))
    np.testing.assert_array_almost_equal(dists, expected.min(axis=1), decimal=10)


def test_nearest_rows_ties_go_to_lower_index():
    y = np.array([[1.0, 0.0], [-1.0, 0.0]], dtype=np.float32)
    labels, _ = nearest_rows(np.zeros((1, 2), dtype=np.float32), y)
    assert labels[0] == 0


def test_exact_topk_matches_scipy_ranking(database, queries):
    query = queries.data[0]
    found = exact_topk(database, query, 10)
    dists = cdist(query[None, :].astype(np.float64), database.data.astype(np.float64), 'sqeuclidean')[0]
    assert [i for i, _ in found] == list(np.argsort(dists, kind='stable')[:10])
    assert all(a[1] <= b[1] for a, b in zip(found, found[1:]))


def test_exact_topk_breaks_ties_by_id():
    data = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [5.0, 5.0]], dtype=np.float32)
    found = exact_topk(VectorDataset(data), np.zeros(2, dtype=np.float32), 2)
    assert [i for i, _ in found] == [0, 1]


def test_exact_topk_batch_rows_equal_single_calls(database, queries):
    ids, dists = exact_topk_batch(database, queries.data[:3], 5)
    for row in range(3):
        single = exact_topk(database, queries.data[row], 5)
        assert list(ids[row]) == [i for i, _ in single]
        np.testing.assert_array_equal(dists[row], [d for _, d in single])


def test_exact_topk_argument_errors(database):
    with pytest.raises(ArgumentError):
        exact_topk(database, np.zeros(database.d + 1), 3)
    with pytest.raises(ArgumentError):
        exact_topk(database, np.zeros(database.d), database.n + 1)


def test_memory_model_reference_value():
    config = ZoomConfig(n_cluster=20000, m=32, l=256, out_d=10)
    assert memory_cost(config, 1_000_000, 128) == 47_171_072
    parts = memory_breakdown(config, 1_000_000, 128)
    assert parts['codes'] == 36_000_000
    assert parts['codebook'] == 131_072
    assert parts['routing'] == 11_040_000


def test_memory_model_rounds_sub_byte_codes_up_once():
    config = ZoomConfig(n_cluster=4, m=3, l=8, out_d=2)
    # 3 codes x 3 bits = 9 bits per vector
    expected = 5 * (9 / 8 + 4) + 8 * 6 * 4 + 4 * (6 + 2) * 4
    assert memory_cost(config, 5, 6) == int(np.ceil(expected))


def test_vq_and_improvement():
    assert vq(2.0, 1000, 10_000, n_vectors=100) == pytest.approx(1000 * 500)
    assert vq_improvement(10.0, 400.0, 2.0, 100.0) == pytest.approx(20.0)
    with pytest.raises(ArgumentError):
        vq(0.0, 10, 10)


def test_recall_and_hit_rate():
    assert recall([1, 2, 3], [3, 4, 1], 3) == pytest.approx(2 / 3)
    with pytest.raises(ArgumentError):
        recall([1, 1, 2], [1, 2, 3], 3)
    assert candidate_hit_rate([4, 5], [9, 5, 1, 4], 2) == 1.0
    assert candidate_hit_rate([4, 5, 6], [6], 2) == 0.0
