# tests/test_pq.py
import numpy as np
import pytest
from scipy.spatial.distance import cdist

from clustering.kmeans import Residuals, compute_residuals, kmeans_train, lloyd
from core.errors import ArgumentError
from pq.adc import (TopRSelector, adc_naive, build_termd_lut, four_terms, scan_pq_vectors,
                    scan_pq_vectors_naive)
from pq.codebook import (PQCodebook, decode, decode_batch, encode, encode_batch,
                         precompute_term, precompute_terms, reconstruction_error,
                         train_codebooks)
from pq.inverted_lists import InvertedLists, build_inverted_lists

n_cluster = 12
n_subvectors = 4
n_codewords = 32


@pytest.fixture(scope="module")
def clusters(database):
    return kmeans_train(database, n_cluster, seed=1)


@pytest.fixture(scope="module")
def residuals(database, clusters):
    return compute_residuals(database, clusters)


@pytest.fixture(scope="module")
def codebook(residuals):
    return train_codebooks(residuals, n_subvectors, n_codewords, seed=2)


@pytest.fixture(scope="module")
def codes(codebook, residuals):
    return encode_batch(codebook, residuals.data)


@pytest.fixture(scope="module")
def lists(codebook, clusters, codes):
    cached = precompute_terms(codebook, clusters.centroids, clusters.assignments, codes)
    return build_inverted_lists(clusters.assignments, codes, cached, n_cluster)


def test_codebook_shape(codebook, database):
    assert codebook.tables.shape == (n_subvectors, n_codewords, database.d // n_subvectors)
    assert codebook.d == database.d


def test_train_rejects_bad_shapes(residuals):
    with pytest.raises(ArgumentError):
        train_codebooks(residuals, 5, 16)
    with pytest.raises(ArgumentError):
        train_codebooks(Residuals(np.zeros((10, 4))), 2, 16)


def test_codes_pick_the_nearest_codeword(codebook, residuals, codes):
    s = codebook.sub_dim
    for j in range(codebook.m):
        dists = cdist(residuals.data[:, j * s:(j + 1) * s], codebook.tables[j].astype(np.float64),
                      'sqeuclidean')
        picked = dists[np.arange(dists.shape[0]), codes[:, j]]
        np.testing.assert_allclose(picked, dists.min(axis=1), rtol=1e-9, atol=1e-9)
    assert codes.dtype == np.uint8


def test_encode_matches_encode_batch(codebook, residuals, codes):
    for row in range(10):
        np.testing.assert_array_equal(encode(codebook, residuals.data[row]), codes[row])


def test_decode_concatenates_codewords(codebook):
    code = np.array([0, 3, 7, 31], dtype=np.uint8)
    expected = np.concatenate([codebook.tables[j, code[j]] for j in range(4)])
    np.testing.assert_array_equal(decode(codebook, code), expected)
    np.testing.assert_array_equal(decode_batch(codebook, code[None, :])[0], expected)


def test_decode_rejects_out_of_range_codes(codebook):
    with pytest.raises(ArgumentError):
        decode(codebook, np.array([0, 0, 0, 40]))
    with pytest.raises(ArgumentError):
        decode(codebook, np.array([0, 0]))


def test_quantization_reduces_residual_energy(codebook, residuals):
    energy = float((residuals.data ** 2).sum(axis=1).mean())
    assert reconstruction_error(codebook, residuals.data) < energy


def test_four_term_identity(codebook, clusters, codes, queries):
    for row in range(50):
        query = queries.data[row % queries.n]
        centroid = clusters.centroids[clusters.assignments[row]]
        a, b, c, d = four_terms(codebook, query, centroid, codes[row])
        naive = adc_naive(codebook, query, centroid, codes[row])
        assert abs(a + b + c + d - naive) / (1 + naive) <= 1e-9


def test_cached_terms_match_single_vector_form(codebook, clusters, codes):
    cached = precompute_terms(codebook, clusters.centroids, clusters.assignments, codes)
    assert cached.dtype == np.float32
    for row in range(20):
        expected = precompute_term(codebook, clusters.centroids[clusters.assignments[row]], codes[row])
        assert cached[row] == pytest.approx(expected, rel=1e-5, abs=1e-4)


def test_termd_table_lookup(codebook, codes, queries):
    lut = build_termd_lut(codebook, queries.data[0])
    assert lut.table.shape == (n_subvectors, n_codewords)
    expected = -2.0 * float(np.dot(queries.data[0].astype(np.float64),
                                   decode(codebook, codes[0]).astype(np.float64)))
    assert lut.lookup(codes[0]) == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_inverted_lists_layout(lists, clusters):
    assert lists.total == clusters.assignments.shape[0]
    np.testing.assert_array_equal(lists.sizes(), clusters.sizes)
    np.testing.assert_array_equal(lists.assignments(), clusters.assignments)
    for cluster_id in range(n_cluster):
        ids, codes, cached = lists.cluster(cluster_id)
        assert np.all(np.diff(ids) > 0)
        assert np.all(clusters.assignments[ids] == cluster_id)
        assert codes.shape[0] == cached.shape[0] == ids.shape[0]
    with pytest.raises(ArgumentError):
        lists.cluster(n_cluster)


def test_inverted_lists_leave_caller_arrays_writable():
    offsets = np.array([0, 2, 3], dtype=np.int64)
    ids = np.array([0, 2, 1], dtype=np.int64)
    codes = np.zeros((3, 2), dtype=np.uint8)
    cached = np.ones(3, dtype=np.float32)
    lists = InvertedLists(offsets=offsets, ids=ids, codes=codes, cached_terms=cached)
    for array in (offsets, ids, codes, cached):
        assert array.flags.writeable
    ids[0] = 7
    assert lists.ids[0] == 0
    with pytest.raises(ValueError):
        lists.codes[0, 0] = 1

    assignments = np.array([1, 0, 1])
    built = build_inverted_lists(assignments, codes, cached, 2)
    assert assignments.flags.writeable and codes.flags.writeable
    assert not built.cached_terms.flags.writeable


def test_top_r_selector_keeps_first_pushed_on_ties():
    selector = TopRSelector(2)
    selector.push_batch(np.array([5, 6]), np.array([1.0, 1.0]))
    selector.push_batch(np.array([7, 8]), np.array([1.0, 0.5]))
    assert selector.result() == [(8, 0.5), (5, 1.0)]


def test_top_r_selector_survives_compaction(rng):
    selector = TopRSelector(3)
    values = rng.permutation(100).astype(np.float64)
    for start in range(0, 100, 7):
        chunk = np.arange(start, min(start + 7, 100))
        selector.push_batch(chunk, values[chunk])
    expected = np.argsort(values)[:3]
    assert [i for i, _ in selector.result()] == expected.tolist()


def _all_scanned(lists, selected):
    return int(sum(lists.sizes()[c] for c, _ in selected))


def test_scan_matches_naive_scan(lists, codebook, clusters, queries):
    query = queries.data[0]
    dists = ((clusters.centroids.astype(np.float64) - query) ** 2).sum(axis=1)
    order = np.argsort(dists)[:4]
    selected = [(int(c), float(dists[c])) for c in order]
    r = _all_scanned(lists, selected)

    fast = dict(scan_pq_vectors(lists, codebook, selected, query, r, accumulate_float64=True))
    naive = dict(scan_pq_vectors_naive(lists, codebook, selected, query, r, clusters.centroids))
    assert fast.keys() == naive.keys()
    for vector_id, estimate in naive.items():
        assert fast[vector_id] == pytest.approx(estimate, rel=1e-4, abs=1e-3)


def test_scan_returns_at_most_r_sorted(lists, codebook, clusters, queries):
    query = queries.data[1]
    selected = [(0, 1.0), (1, 2.0)]
    found = scan_pq_vectors(lists, codebook, selected, query, 5)
    assert len(found) == min(5, _all_scanned(lists, selected))
    estimates = [e for _, e in found]
    assert estimates == sorted(estimates)
    with pytest.raises(ArgumentError):
        scan_pq_vectors(lists, codebook, [(n_cluster, 0.0)], query, 5)
    with pytest.raises(ArgumentError):
        scan_pq_vectors(lists, codebook, selected, query, 0)


def test_as_many_codewords_as_points_is_lossless(rng):
    points = Residuals(rng.normal(size=(16, 6)).astype(np.float32).astype(np.float64))
    codebook = train_codebooks(points, 3, 16, seed=0)
    assert reconstruction_error(codebook, points.data) == pytest.approx(0.0, abs=1e-12)


def test_single_slice_is_plain_kmeans(residuals):
    codebook = train_codebooks(residuals, 1, n_codewords, seed=9)
    reference = lloyd(residuals.data.astype(np.float32), n_codewords, seed=9)
    np.testing.assert_array_equal(codebook.tables[0], reference.centroids)


def test_reconstruction_error_falls_with_more_codewords(residuals):
    errors = [
        reconstruction_error(train_codebooks(residuals, n_subvectors, l, seed=2), residuals.data)
        for l in (16, 64, 256)
    ]
    assert errors[0] > errors[1] > errors[2]


def test_single_codeword_encodes_to_zero(residuals):
    codebook = train_codebooks(residuals, n_subvectors, 1, seed=2)
    for row in residuals.data[:50]:
        assert encode(codebook, row).tolist() == [0] * n_subvectors


def test_cached_term_with_zero_codewords_or_zero_centroid(codebook, rng):
    code = np.array([3, 0, 31, 7], dtype=np.uint8)
    zero_words = PQCodebook(np.zeros((n_subvectors, n_codewords, codebook.sub_dim)))
    assert precompute_term(zero_words, rng.normal(size=codebook.d), code) == 0.0

    words = decode(codebook, code).astype(np.float64)
    assert precompute_term(codebook, np.zeros(codebook.d), code) == pytest.approx(
        float((words * words).sum()), rel=1e-12)


def test_adc_error_falls_with_more_subvectors(database, clusters, residuals, queries):
    sample = np.arange(0, database.n, 20)
    exact = cdist(queries.data.astype(np.float64), database.data[sample].astype(np.float64),
                  'sqeuclidean')
    mean_errors = []
    for m in (4, 8, 16):
        codebook = train_codebooks(residuals, m, n_codewords, seed=2)
        sample_codes = encode_batch(codebook, residuals.data[sample])
        errors = [
            abs(adc_naive(codebook, query, clusters.centroids[clusters.assignments[i]], code)
                - exact[qi, col])
            for qi, query in enumerate(queries.data)
            for col, (i, code) in enumerate(zip(sample, sample_codes))
        ]
        mean_errors.append(float(np.mean(errors)))
    assert mean_errors[0] > mean_errors[1] > mean_errors[2]
