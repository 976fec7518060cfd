# tests/test_serialization.py
import os

import numpy as np
import pytest

from core.errors import FormatError, StorageError
from core.types import SearchParams, ZoomConfig
from zoom.index import build, search
from zoom.serialization import (CONFIG, CONFIG_OFFSET, SECTION, deserialize, pack_ids, serialize,
                                to_bytes, unpack_ids)

PARAMS = SearchParams(k=5, r=30, nscan=3, ef_search=8)


@pytest.fixture
def saved(tiny_index, tmp_path):
    path = str(tmp_path / "tiny.zoom")
    serialize(tiny_index, path)
    return path


def test_roundtrip_restores_every_part(tiny_index, saved, tiny_dataset):
    loaded = deserialize(saved, io_mode='buffered')
    try:
        assert loaded.config == tiny_index.config
        np.testing.assert_array_equal(loaded.clusters.centroids, tiny_index.clusters.centroids)
        np.testing.assert_array_equal(loaded.clusters.assignments, tiny_index.clusters.assignments)
        np.testing.assert_array_equal(loaded.clusters.sizes, tiny_index.clusters.sizes)
        np.testing.assert_array_equal(loaded.codebook.tables, tiny_index.codebook.tables)
        np.testing.assert_array_equal(loaded.lists.ids, tiny_index.lists.ids)
        np.testing.assert_array_equal(loaded.lists.codes, tiny_index.lists.codes)
        np.testing.assert_array_equal(loaded.lists.cached_terms, tiny_index.lists.cached_terms)
        assert loaded.routing.layers == tiny_index.routing.layers
        assert loaded.routing.entry_point == tiny_index.routing.entry_point
        np.testing.assert_array_equal(loaded.routing.node_levels, tiny_index.routing.node_levels)

        for row in range(0, tiny_dataset.n, 37):
            query = tiny_dataset.data[row]
            assert search(loaded, query, PARAMS).neighbors == search(tiny_index, query, PARAMS).neighbors
    finally:
        loaded.close()


def test_serialized_bytes_are_deterministic(tiny_index, tiny_dataset, tmp_path):
    assert to_bytes(tiny_index) == to_bytes(tiny_index)

    # two builds with one seed, written to the same paths
    config = ZoomConfig(n_cluster=8, m=2, l=16, out_d=4, seed=5)
    path = str(tmp_path / "again.fvw")
    first = build(tiny_dataset, config, path, io_mode='buffered')
    first_bytes = to_bytes(first)
    first.close()
    second = build(tiny_dataset, config, path, io_mode='buffered')
    try:
        assert to_bytes(second) == first_bytes
    finally:
        second.close()


def test_bad_magic(saved):
    with open(saved, 'r+b') as f:
        f.write(b'NOPE')
    with pytest.raises(FormatError) as excinfo:
        deserialize(saved)
    assert excinfo.value.offset == 0


def test_truncated_container(saved):
    with open(saved, 'rb') as f:
        payload = f.read()
    with open(saved, 'wb') as f:
        f.write(payload[:len(payload) // 2])
    with pytest.raises(FormatError):
        deserialize(saved)


def test_missing_fullview_file(tiny_index, saved):
    os.remove(tiny_index.fullview.path)
    with pytest.raises(StorageError):
        deserialize(saved)


def test_corrupted_fullview_fails_the_checksum(tiny_index, saved):
    with open(tiny_index.fullview.path, 'r+b') as f:
        f.seek(tiny_index.fullview.record_offset(3))
        f.write(b'\xff\xff\xff\xff')
    with pytest.raises(StorageError):
        deserialize(saved)


def test_moved_files_are_found_side_by_side(tiny_index, saved, tmp_path):
    moved = tmp_path / "moved"
    moved.mkdir()
    os.replace(saved, moved / "tiny.zoom")
    os.replace(tiny_index.fullview.path, moved / os.path.basename(tiny_index.fullview.path))
    loaded = deserialize(str(moved / "tiny.zoom"), io_mode='buffered')
    try:
        assert os.path.dirname(loaded.fullview.path) == str(moved)
        assert loaded.n == tiny_index.n
    finally:
        loaded.close()


@pytest.mark.parametrize("bits", [1, 3, 8, 11, 17])
def test_bit_packed_ids(bits, rng):
    values = rng.integers(0, 2 ** bits, size=101)
    payload = pack_ids(values, bits)
    assert len(payload) == -(-101 * bits // 8)
    np.testing.assert_array_equal(unpack_ids(payload, 101, bits), values)


def _split_container(raw):
    """(preamble + config bytes, [(tag, payload), ...])"""
    head = CONFIG_OFFSET + CONFIG.itemsize
    sections, pos = [], head
    while pos < len(raw):
        header = np.frombuffer(raw, dtype=SECTION, count=1, offset=pos)[0]
        start = pos + SECTION.itemsize
        sections.append((bytes(header['tag']), raw[start:start + int(header['length'])]))
        pos = start + int(header['length'])
    return raw[:head], sections


def _join_container(head, sections):
    parts = [head]
    for tag, payload in sections:
        header = np.zeros(1, dtype=SECTION)
        header['tag'] = tag
        header['length'] = len(payload)
        parts += [header.tobytes(), payload]
    return b''.join(parts)


def _patch_config(path, field, value):
    dtype, offset = CONFIG.fields[field][:2]
    with open(path, 'r+b') as f:
        f.seek(CONFIG_OFFSET + offset)
        f.write(np.array([value], dtype=dtype).tobytes())


def test_rerank_batch_survives_the_roundtrip(tiny_index, tmp_path):
    tiny_index.rerank_batch = 4
    path = str(tmp_path / "batched.zoom")
    serialize(tiny_index, path)
    loaded = deserialize(path, io_mode='buffered')
    try:
        assert loaded.rerank_batch == 4
        assert loaded.plan_for(30).b == 4
    finally:
        loaded.close()


@pytest.mark.parametrize("field, value", [
    ('m', 0),
    ('n_cluster', 0),
    ('m', 3),
    ('l', 300),
    ('n_cluster', 100_000),
    ('rerank_batch', 0),
    ('d', 0),
])
def test_bad_config_values_name_the_config_block(saved, field, value):
    _patch_config(saved, field, value)
    with pytest.raises(FormatError) as excinfo:
        deserialize(saved)
    assert excinfo.value.offset == CONFIG_OFFSET


def test_entry_point_out_of_range(saved):
    _patch_config(saved, 'entry_point', 8)
    with pytest.raises(FormatError) as excinfo:
        deserialize(saved)
    assert excinfo.value.offset == CONFIG_OFFSET


@pytest.mark.parametrize("tag", [b'CENT', b'CODB', b'CODE', b'ASGN'])
def test_section_length_must_match_the_config(tiny_index, tmp_path, tag):
    head, sections = _split_container(to_bytes(tiny_index))
    shortened = [(t, p[:-1] if t == tag else p) for t, p in sections]
    path = tmp_path / "short.zoom"
    path.write_bytes(_join_container(head, shortened))

    expected = len(head)
    for t, payload in sections:
        expected += SECTION.itemsize
        if t == tag:
            break
        expected += len(payload)
    with pytest.raises(FormatError) as excinfo:
        deserialize(str(path))
    assert excinfo.value.offset == expected


def test_neighbour_id_out_of_range(tiny_index, tmp_path):
    head, sections = _split_container(to_bytes(tiny_index))
    n_cluster = tiny_index.config.n_cluster
    # ground layer: u32 count, u32 offsets, then one-byte neighbour ids
    first_edge = 4 + 4 * (n_cluster + 1)
    patched, rout_start, pos = [], None, len(head)
    for tag, payload in sections:
        pos += SECTION.itemsize
        if tag == b'ROUT':
            rout_start = pos
            payload = payload[:first_edge] + bytes([200]) + payload[first_edge + 1:]
        patched.append((tag, payload))
        pos += len(payload)
    path = tmp_path / "edges.zoom"
    path.write_bytes(_join_container(head, patched))
    with pytest.raises(FormatError) as excinfo:
        deserialize(str(path))
    assert excinfo.value.offset == rout_start + first_edge


def test_upper_layer_count_above_n_cluster(tiny_index, tmp_path):
    if tiny_index.routing.n_layers < 2:
        pytest.skip("single-layer routing graph")
    head, sections = _split_container(to_bytes(tiny_index))
    n_cluster = tiny_index.config.n_cluster
    ground = 4 + 4 * (n_cluster + 1) + tiny_index.routing.edge_count(0)
    patched = []
    for tag, payload in sections:
        if tag == b'ROUT':
            payload = payload[:ground] + np.array([n_cluster + 1], dtype='<u4').tobytes() \
                + payload[ground + 4:]
        patched.append((tag, payload))
    path = tmp_path / "layers.zoom"
    path.write_bytes(_join_container(head, patched))
    with pytest.raises(FormatError):
        deserialize(str(path))
