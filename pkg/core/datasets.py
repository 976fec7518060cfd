# core/datasets.py
"""
Dataset ingestion and generation.

Reads the TexMex formats (.fvecs, .bvecs) and a raw float32 layout, writes the
same formats back, and generates Gaussian-blob data for desk-scale benchmarks.

Formats (little-endian):
    fvecs   per record: int32 d, then d float32
    bvecs   per record: int32 d, then d uint8
    raw     header u64 n, u64 d, then n*d float32
"""

import os
import logging
from typing import Tuple

import numpy as np

from core.errors import ArgumentError, FormatError, StorageError
from core.types import VectorDataset

logger = logging.getLogger(__name__)

FORMATS = ('fvecs', 'bvecs', 'raw_f32')
# CLI spelling `raw` maps onto raw_f32
FORMAT_ALIASES = {'raw': 'raw_f32'}

RAW_HEADER = np.dtype([('n', '<u8'), ('d', '<u8')])


def normalize_format(fmt: str) -> str:
    fmt = FORMAT_ALIASES.get(fmt, fmt)
    if fmt not in FORMATS:
        raise ArgumentError(f"Unknown dataset format {fmt!r}; expected one of {FORMATS}")
    return fmt


def _read_bytes(path: str) -> bytes:
    if not os.path.isfile(path):
        raise ArgumentError(f"Dataset file not found: {path}")
    with open(path, 'rb') as f:
        return f.read()


def _parse_texmex(buf: bytes, scalar: np.dtype, path: str) -> np.ndarray:
    """Parse fvecs/bvecs records, validating every dimension header."""
    if len(buf) < 4:
        raise FormatError(f"{path}: file too short for a record header", offset=0)

    d = int(np.frombuffer(buf, dtype='<i4', count=1)[0])
    if d <= 0:
        raise FormatError(f"{path}: non-positive dimension {d} in first record", offset=0)

    record_bytes = 4 + d * scalar.itemsize
    n_full, remainder = divmod(len(buf), record_bytes)
    if remainder:
        raise FormatError(
            f"{path}: trailing {remainder} bytes do not form a complete "
            f"{record_bytes}-byte record",
            offset=n_full * record_bytes,
        )

    records = np.frombuffer(buf, dtype=np.dtype([('d', '<i4'), ('v', scalar, (d,))]))
    bad = np.flatnonzero(records['d'] != d)
    if bad.size:
        first = int(bad[0])
        raise FormatError(
            f"{path}: record {first} declares d={int(records['d'][first])}, "
            f"first record declares d={d}",
            offset=first * record_bytes,
        )
    return records['v'].astype(np.float32)


def _parse_raw(buf: bytes, path: str) -> np.ndarray:
    if len(buf) < RAW_HEADER.itemsize:
        raise FormatError(f"{path}: file too short for raw header", offset=0)
    header = np.frombuffer(buf, dtype=RAW_HEADER, count=1)[0]
    n, d = int(header['n']), int(header['d'])
    expected = RAW_HEADER.itemsize + n * d * 4
    if len(buf) != expected:
        raise FormatError(
            f"{path}: raw header says {n}x{d} ({expected} bytes) but file has {len(buf)} bytes",
            offset=min(len(buf), expected),
        )
    return np.frombuffer(buf, dtype='<f4', offset=RAW_HEADER.itemsize).reshape(n, d)


def load_dataset(path: str, fmt: str = 'fvecs') -> VectorDataset:
    """
    Load a vector file.

    Args:
        path: File path
        fmt: 'fvecs', 'bvecs' or 'raw_f32' ('raw' accepted)

    Returns:
        VectorDataset with n = record count and d = record dimension

    Raises:
        ArgumentError: Missing file or unknown format
        FormatError: Malformed record length, inconsistent d, or non-finite values
    """
    fmt = normalize_format(fmt)
    buf = _read_bytes(path)

    if fmt == 'fvecs':
        data = _parse_texmex(buf, np.dtype('<f4'), path)
    elif fmt == 'bvecs':
        data = _parse_texmex(buf, np.dtype('u1'), path)
    else:
        data = _parse_raw(buf, path)

    if data.shape[0] == 0:
        raise FormatError(f"{path}: no records", offset=0)
    if not np.isfinite(data).all():
        row, col = (int(i) for i in np.argwhere(~np.isfinite(data))[0])
        d = data.shape[1]
        if fmt == 'raw_f32':
            offset = RAW_HEADER.itemsize + (row * d + col) * 4
        else:
            offset = row * (4 + d * 4) + 4 + col * 4
        raise FormatError(f"{path}: record {row} contains NaN or Inf", offset=offset)

    logger.info(f"Loaded {data.shape[0]} x {data.shape[1]} vectors from {path} ({fmt})")
    return VectorDataset(data)


def write_dataset(dataset: VectorDataset, path: str, fmt: str = 'fvecs') -> None:
    """
    Write a dataset in one of the supported formats.

    Raises:
        ArgumentError: bvecs requested for values that are not integers in [0, 255]
        StorageError: the file could not be written
    """
    fmt = normalize_format(fmt)
    data = dataset.data
    n, d = data.shape

    if fmt == 'fvecs':
        records = np.empty(n, dtype=np.dtype([('d', '<i4'), ('v', '<f4', (d,))]))
        records['d'] = d
        records['v'] = data
        payload = records.tobytes()
    elif fmt == 'bvecs':
        if data.min() < 0 or data.max() > 255 or not np.array_equal(data, np.round(data)):
            raise ArgumentError("bvecs can only hold integer values in [0, 255]")
        records = np.empty(n, dtype=np.dtype([('d', '<i4'), ('v', 'u1', (d,))]))
        records['d'] = d
        records['v'] = data.astype(np.uint8)
        payload = records.tobytes()
    else:
        header = np.array([(n, d)], dtype=RAW_HEADER)
        payload = header.tobytes() + data.astype('<f4').tobytes()

    try:
        with open(path, 'wb') as f:
            f.write(payload)
    except OSError as e:
        logger.error(f"Writing dataset {path} failed: {e}")
        raise StorageError(f"Cannot write dataset {path}: {e}") from e
    logger.info(f"Wrote {n} x {d} vectors to {path} ({fmt})")


def generate_synthetic(n: int, d: int, n_clusters_true: int, seed: int,
                       spread: float = 10.0, sigma: float = 1.0) -> VectorDataset:
    """
    Isotropic Gaussian blobs around random centres.

    Args:
        n: Vector count
        d: Dimensionality
        n_clusters_true: Number of blobs
        seed: RNG seed; identical arguments give identical data
        spread: Centres are drawn uniformly from [-spread, spread]^d
        sigma: Per-coordinate standard deviation inside a blob

    Returns:
        VectorDataset of shape (n, d)
    """
    if n <= 0 or d <= 0 or n_clusters_true <= 0:
        raise ArgumentError(
            f"n, d and n_clusters_true must be positive, got {n}, {d}, {n_clusters_true}"
        )
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-spread, spread, size=(n_clusters_true, d))
    labels = rng.integers(0, n_clusters_true, size=n)
    points = centers[labels] + rng.normal(0.0, sigma, size=(n, d))
    return VectorDataset(points.astype(np.float32))


def generate_synthetic_split(n: int, n_queries: int, d: int, n_clusters_true: int,
                             seed: int) -> Tuple[VectorDataset, VectorDataset]:
    """
    One blob draw of n + n_queries points split into a database and held-out queries.

    Returns:
        (database, queries)
    """
    if n_queries <= 0:
        raise ArgumentError(f"n_queries must be positive, got {n_queries}")
    full = generate_synthetic(n + n_queries, d, n_clusters_true, seed)
    return VectorDataset(full.data[:n]), VectorDataset(full.data[n:])
