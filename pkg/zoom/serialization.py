# zoom/serialization.py
"""
Index container format (little-endian).

    magic "ZOOM", u32 version
    config block (CONFIG dtype, including the tuned rerank batch size)
    sections, each: 4-byte tag, u64 payload length, payload
        CENT  centroids, n_cluster x d float32
        ROUT  routing layers; per layer u32 node count, node ids (upper layers
              only), u32 CSR offsets, neighbour ids at the narrowest unsigned
              width that holds n_cluster - 1
        CODB  codebook, m x l x sub_dim float32
        CODE  PQ codes cluster-major (n x m uint8), then cached terms (n float32)
        ASGN  cluster id of every vector id, bit-packed at ceil(log2 n_cluster) bits
        FVIE  u32 crc32 of the full-view file, then its path (utf-8)

Inverted-list ids are not stored: they follow from the assignment column,
since ids ascend within each list.
"""

import logging
import os
from typing import Dict, List, Optional, Tuple

import numpy as np

from clustering.kmeans import ClusterModel
from core.errors import ArgumentError, FormatError, StorageError
from core.metrics import code_bits
from core.types import ZoomConfig
from fullview.store import open_store, store_checksum
from pq.codebook import PQCodebook
from pq.inverted_lists import build_inverted_lists
from routing.hnsw_router import Adjacency, RoutingGraph
from zoom.index import ZoomIndex

logger = logging.getLogger(__name__)

MAGIC = b'ZOOM'
VERSION = 2
PREAMBLE = np.dtype([('magic', 'S4'), ('version', '<u4')])
CONFIG = np.dtype([
    ('n', '<u8'),
    ('d', '<u8'),
    ('n_cluster', '<u4'),
    ('m', '<u4'),
    ('l', '<u4'),
    ('out_d', '<u4'),
    ('seed', '<u8'),
    ('ef_construction', '<u4'),
    ('kmeans_max_iters', '<u4'),
    ('entry_point', '<u4'),
    ('n_layers', '<u4'),
    ('rerank_batch', '<u4'),
])
CONFIG_OFFSET = PREAMBLE.itemsize
SECTION = np.dtype([('tag', 'S4'), ('length', '<u8')])
REQUIRED_SECTIONS = (b'CENT', b'ROUT', b'CODB', b'CODE', b'ASGN', b'FVIE')


def id_dtype(n_cluster: int) -> np.dtype:
    """Narrowest little-endian unsigned type that holds every node id."""
    return np.dtype(np.min_scalar_type(max(n_cluster - 1, 0))).newbyteorder('<')


def pack_ids(values: np.ndarray, bits: int) -> bytes:
    """Pack non-negative ints (< 2**bits, bits <= 32) into a big-endian bit stream."""
    if bits == 0:
        return b''
    as_bytes = values.astype('>u4').view(np.uint8).reshape(-1, 4)
    bit_rows = np.unpackbits(as_bytes, axis=1)[:, 32 - bits:]
    return np.packbits(bit_rows.reshape(-1)).tobytes()


def unpack_ids(payload: bytes, count: int, bits: int) -> np.ndarray:
    if bits == 0:
        return np.zeros(count, dtype=np.int64)
    bit_stream = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=count * bits)
    bit_rows = np.zeros((count, 32), dtype=np.uint8)
    bit_rows[:, 32 - bits:] = bit_stream.reshape(count, bits)
    return np.packbits(bit_rows, axis=1).view('>u4').reshape(-1).astype(np.int64)


def _routing_payload(graph: RoutingGraph, width: np.dtype) -> bytes:
    parts: List[bytes] = []
    for depth, layer in enumerate(graph.layers):
        nodes = sorted(layer) if depth else list(range(len(layer)))
        parts.append(np.array([len(nodes)], dtype='<u4').tobytes())
        if depth:
            parts.append(np.asarray(nodes, dtype=width).tobytes())
        counts = np.array([len(layer[node]) for node in nodes], dtype=np.int64)
        offsets = np.zeros(len(nodes) + 1, dtype='<u4')
        np.cumsum(counts, out=offsets[1:], dtype=np.uint32)
        parts.append(offsets.tobytes())
        flat = [nbr for node in nodes for nbr in layer[node]]
        parts.append(np.asarray(flat, dtype=width).tobytes())
    return b''.join(parts)


def _section(tag: bytes, payload: bytes) -> bytes:
    header = np.zeros(1, dtype=SECTION)
    header['tag'] = tag
    header['length'] = len(payload)
    return header.tobytes() + payload


def to_bytes(index: ZoomIndex, fullview_crc: Optional[int] = None) -> bytes:
    """The serialized container as bytes."""
    config = index.config
    preamble = np.zeros(1, dtype=PREAMBLE)
    preamble['magic'] = MAGIC
    preamble['version'] = VERSION
    block = np.zeros(1, dtype=CONFIG)
    block['n'] = index.n
    block['d'] = index.d
    block['n_cluster'] = config.n_cluster
    block['m'] = config.m
    block['l'] = config.l
    block['out_d'] = config.out_d
    block['seed'] = config.seed
    block['ef_construction'] = config.ef_construction
    block['kmeans_max_iters'] = config.kmeans_max_iters
    block['entry_point'] = index.routing.entry_point
    block['n_layers'] = index.routing.n_layers
    block['rerank_batch'] = index.rerank_batch

    width = id_dtype(config.n_cluster)
    crc = store_checksum(index.fullview) if fullview_crc is None else fullview_crc
    fullview_path = os.path.abspath(index.fullview.path).encode('utf-8')

    return b''.join([
        preamble.tobytes(),
        block.tobytes(),
        _section(b'CENT', index.clusters.centroids.astype('<f4').tobytes()),
        _section(b'ROUT', _routing_payload(index.routing, width)),
        _section(b'CODB', index.codebook.tables.astype('<f4').tobytes()),
        _section(b'CODE', index.lists.codes.tobytes() + index.lists.cached_terms.astype('<f4').tobytes()),
        _section(b'ASGN', pack_ids(index.clusters.assignments, code_bits(config.n_cluster))),
        _section(b'FVIE', np.array([crc], dtype='<u4').tobytes() + fullview_path),
    ])


def serialize(index: ZoomIndex, path: str) -> int:
    """
    Write the index container through a temp file and an atomic rename.

    Returns:
        Bytes written

    Raises:
        StorageError: the file could not be written
    """
    payload = to_bytes(index)
    tmp_path = f"{path}.tmp"
    try:
        with open(tmp_path, 'wb') as f:
            f.write(payload)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_path, path)
    except OSError as e:
        logger.error(f"Writing index {path} failed: {e}")
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise StorageError(f"Cannot write index {path}: {e}") from e
    logger.info(f"Serialized index to {path} ({len(payload)} bytes)")
    return len(payload)


class _Reader:
    """Cursor over the container bytes; every overrun is a FormatError."""

    def __init__(self, buf: bytes, path: str, base: int = 0):
        self.buf = buf
        self.path = path
        self.base = base
        self.pos = 0

    @property
    def offset(self) -> int:
        """Absolute file offset of the cursor."""
        return self.base + self.pos

    def take(self, nbytes: int, what: str) -> bytes:
        if nbytes < 0 or self.pos + nbytes > len(self.buf):
            raise FormatError(f"{self.path}: truncated while reading {what}", offset=self.offset)
        chunk = self.buf[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return chunk

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(dtype.itemsize * count, what), dtype=dtype, count=count)

    def done(self) -> bool:
        return self.pos >= len(self.buf)


def _read_routing(payload: bytes, path: str, base: int, n_layers: int, n_cluster: int,
                  entry_point: int, out_d: int) -> RoutingGraph:
    reader = _Reader(payload, path, base)
    width = id_dtype(n_cluster)
    if n_layers < 1:
        raise FormatError(f"{path}: routing graph has no layers", offset=base)
    if not 0 <= entry_point < n_cluster:
        raise FormatError(f"{path}: routing entry point {entry_point} outside [0, {n_cluster})",
                          offset=CONFIG_OFFSET)
    layers: List[Adjacency] = []
    levels = np.zeros(n_cluster, dtype=np.int64)
    for depth in range(n_layers):
        at = reader.offset
        count = int(reader.array('<u4', 1, f"routing layer {depth} size")[0])
        if depth == 0 and count != n_cluster:
            raise FormatError(f"{path}: ground layer holds {count} nodes, expected {n_cluster}", offset=at)
        if count > n_cluster:
            raise FormatError(f"{path}: routing layer {depth} holds {count} nodes", offset=at)
        if depth:
            at = reader.offset
            nodes = reader.array(width, count, f"routing layer {depth} nodes").astype(np.int64)
            if count and nodes.max() >= n_cluster:
                raise FormatError(f"{path}: routing layer {depth} node id outside [0, {n_cluster})",
                                  offset=at)
            levels[nodes] = depth
        else:
            nodes = np.arange(count, dtype=np.int64)
        at = reader.offset
        offsets = reader.array('<u4', count + 1, f"routing layer {depth} offsets").astype(np.int64)
        if offsets[0] != 0 or np.any(np.diff(offsets) < 0):
            raise FormatError(f"{path}: routing layer {depth} offsets are not ascending", offset=at)
        at = reader.offset
        edges = reader.array(width, int(offsets[-1]), f"routing layer {depth} edges")
        if edges.size and int(edges.max()) >= n_cluster:
            raise FormatError(f"{path}: routing layer {depth} neighbour id outside [0, {n_cluster})",
                              offset=at)
        flat = edges.tolist()
        offsets = offsets.tolist()
        layers.append({
            int(node): flat[offsets[i]:offsets[i + 1]] for i, node in enumerate(nodes.tolist())
        })
    if not reader.done():
        raise FormatError(f"{path}: {len(payload) - reader.pos} trailing bytes in routing section",
                          offset=reader.offset)
    levels.setflags(write=False)
    return RoutingGraph(layers=layers, entry_point=entry_point, out_d=out_d, node_levels=levels)


def _read_config(block: np.void, path: str) -> Tuple[ZoomConfig, int, int]:
    """Config block to (ZoomConfig, n, d); any out-of-range value is a FormatError."""
    n, d = int(block['n']), int(block['d'])
    if n < 1 or d < 1:
        raise FormatError(f"{path}: config block records n={n}, d={d}", offset=CONFIG_OFFSET)
    if int(block['rerank_batch']) < 1:
        raise FormatError(f"{path}: config block records rerank_batch=0", offset=CONFIG_OFFSET)
    try:
        config = ZoomConfig(
            n_cluster=int(block['n_cluster']),
            m=int(block['m']),
            l=int(block['l']),
            out_d=int(block['out_d']),
            seed=int(block['seed']),
            ef_construction=int(block['ef_construction']),
            kmeans_max_iters=int(block['kmeans_max_iters']),
        )
        config.check_dimension(d)
    except ArgumentError as e:
        raise FormatError(f"{path}: invalid config block: {e}", offset=CONFIG_OFFSET) from e
    if config.n_cluster > n:
        raise FormatError(f"{path}: n_cluster={config.n_cluster} exceeds n={n}", offset=CONFIG_OFFSET)
    return config, n, d


def _locate_fullview(stored_path: str, index_path: str) -> str:
    """The recorded path, or a file of the same name next to the index."""
    if os.path.exists(stored_path):
        return stored_path
    sibling = os.path.join(os.path.dirname(os.path.abspath(index_path)), os.path.basename(stored_path))
    if os.path.exists(sibling):
        logger.warning(f"Full-view file {stored_path} not found, using {sibling}")
        return sibling
    raise StorageError(f"Full-view file {stored_path} referenced by {index_path} not found")


def deserialize(path: str, io_mode: Optional[str] = None,
                verify_checksum: bool = True) -> ZoomIndex:
    """
    Load an index container and reopen its full-view store.

    Raises:
        FormatError: bad magic, unknown version, truncation or missing section
        StorageError: file unreadable, full-view file missing or checksum mismatch
    """
    try:
        with open(path, 'rb') as f:
            buf = f.read()
    except OSError as e:
        raise StorageError(f"Cannot read index {path}: {e}") from e

    reader = _Reader(buf, path)
    preamble = reader.array(PREAMBLE, 1, "preamble")[0]
    if bytes(preamble['magic']) != MAGIC:
        raise FormatError(f"{path}: bad magic {bytes(preamble['magic'])!r}", offset=0)
    if int(preamble['version']) != VERSION:
        raise FormatError(f"{path}: unsupported index version {int(preamble['version'])}", offset=4)
    block = reader.array(CONFIG, 1, "config block")[0]

    sections: Dict[bytes, bytes] = {}
    section_offsets: Dict[bytes, int] = {}
    while not reader.done():
        header = reader.array(SECTION, 1, "section header")[0]
        tag = bytes(header['tag'])
        start = reader.offset
        payload = reader.take(int(header['length']), f"section {tag!r}")
        if tag in REQUIRED_SECTIONS:
            sections[tag] = payload
            section_offsets[tag] = start
        else:
            logger.warning(f"{path}: skipping unknown section {tag!r}")
    missing = [tag for tag in REQUIRED_SECTIONS if tag not in sections]
    if missing:
        raise FormatError(f"{path}: missing sections {missing}")

    config, n, d = _read_config(block, path)
    n_cluster, m, l = config.n_cluster, config.m, config.l

    expected = {
        b'CENT': n_cluster * d * 4,
        b'CODB': m * l * (d // m) * 4,
        b'CODE': n * m + n * 4,
        b'ASGN': -(-n * code_bits(n_cluster) // 8),
    }
    for tag, size in expected.items():
        if len(sections[tag]) != size:
            raise FormatError(
                f"{path}: section {tag!r} holds {len(sections[tag])} bytes, config implies {size}",
                offset=section_offsets[tag],
            )

    def fixed(tag: bytes, dtype, count: int) -> np.ndarray:
        return _Reader(sections[tag], path, section_offsets[tag]).array(dtype, count, f"section {tag!r}")

    centroids = fixed(b'CENT', '<f4', n_cluster * d).reshape(n_cluster, d)
    tables = fixed(b'CODB', '<f4', m * l * (d // m)).reshape(m, l, d // m)
    code_reader = _Reader(sections[b'CODE'], path, section_offsets[b'CODE'])
    codes = code_reader.array(np.uint8, n * m, "PQ codes").reshape(n, m)
    if codes.size and int(codes.max()) >= l:
        raise FormatError(f"{path}: PQ code outside [0, {l})", offset=section_offsets[b'CODE'])
    cached = code_reader.array('<f4', n, "cached terms")

    assignments = unpack_ids(sections[b'ASGN'], n, code_bits(n_cluster))
    if n and assignments.max() >= n_cluster:
        raise FormatError(f"{path}: assignment column references cluster >= {n_cluster}",
                          offset=section_offsets[b'ASGN'])
    sizes = np.bincount(assignments, minlength=n_cluster).astype(np.int64)
    assignments.setflags(write=False)

    # lists were written cluster-major with ids ascending; rebuild that order
    order = np.argsort(assignments, kind='stable')
    per_vector_codes = np.empty_like(codes)
    per_vector_codes[order] = codes
    per_vector_cached = np.empty_like(cached)
    per_vector_cached[order] = cached
    lists = build_inverted_lists(assignments, per_vector_codes, per_vector_cached, n_cluster)

    routing = _read_routing(sections[b'ROUT'], path, section_offsets[b'ROUT'], int(block['n_layers']),
                            n_cluster, int(block['entry_point']), config.out_d)

    fview = sections[b'FVIE']
    if len(fview) < 5:
        raise FormatError(f"{path}: truncated full-view reference", offset=section_offsets[b'FVIE'])
    crc = int(np.frombuffer(fview[:4], dtype='<u4')[0])
    try:
        stored_path = fview[4:].decode('utf-8')
    except UnicodeDecodeError as e:
        raise FormatError(f"{path}: full-view path is not utf-8",
                          offset=section_offsets[b'FVIE'] + 4) from e
    fullview_path = _locate_fullview(stored_path, path)
    if verify_checksum and store_checksum(fullview_path) != crc:
        raise StorageError(f"Full-view file {fullview_path} does not match the index checksum")
    store = open_store(fullview_path, io_mode=io_mode)
    if store.n != n or store.d != d:
        store.close()
        raise FormatError(f"{path}: full-view file is {store.n} x {store.d}, index expects {n} x {d}")

    rerank_batch = int(block['rerank_batch'])
    clusters = ClusterModel(centroids=centroids, assignments=assignments, sizes=sizes)
    logger.info(f"Loaded index {path}: n={n}, d={d}, n_cluster={n_cluster}, m={m}, l={l}")
    return ZoomIndex(
        config=config,
        clusters=clusters,
        routing=routing,
        codebook=PQCodebook(tables),
        lists=lists,
        fullview=store,
        rerank_batch=rerank_batch,
    )
