# pq/codebook.py
"""
Product quantization of cluster residuals.

The residual space is split into m contiguous slices of d/m dimensions and
each slice gets its own l-word codebook trained with Lloyd's k-means. A
vector is encoded as m one-byte codeword indices.
"""

import logging
from dataclasses import dataclass

import numpy as np

from clustering.kmeans import DEFAULT_MAX_ITERS, Residuals, lloyd
from core.distances import nearest_rows
from core.errors import ArgumentError

logger = logging.getLogger(__name__)

# rows decoded per block when computing cached terms
TERM_BLOCK_ROWS = 65536

# A PQ code is a (m,) uint8 array; a batch of codes is (n, m) uint8.
PQCode = np.ndarray


@dataclass(frozen=True)
class PQCodebook:
    """
    Args:
        tables: (m, l, sub_dim) float32 sub-codebooks
    """
    tables: np.ndarray

    def __post_init__(self):
        tables = np.ascontiguousarray(self.tables, dtype=np.float32)
        if tables.ndim != 3:
            raise ArgumentError(f"Codebook tables must be (m, l, sub_dim), got {tables.shape}")
        if not 1 <= tables.shape[1] <= 256:
            raise ArgumentError(f"l must be in [1, 256], got {tables.shape[1]}")
        if tables is self.tables:
            tables = tables.copy()
        tables.setflags(write=False)
        object.__setattr__(self, 'tables', tables)

    @property
    def m(self) -> int:
        return self.tables.shape[0]

    @property
    def l(self) -> int:
        return self.tables.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.tables.shape[2]

    @property
    def d(self) -> int:
        return self.m * self.sub_dim

    def squared_norms(self) -> np.ndarray:
        """(m, l) float64 squared norm of every codeword."""
        tables64 = self.tables.astype(np.float64)
        return (tables64 * tables64).sum(axis=2)


def train_codebooks(residuals: Residuals, m: int, l: int, seed: int = 0,
                    max_iters: int = DEFAULT_MAX_ITERS) -> PQCodebook:
    """
    Train one l-word codebook per residual slice.

    Args:
        residuals: Residuals from compute_residuals
        m: Sub-dimension count, must divide d
        l: Codewords per slice, l <= min(n, 256)
        seed: Slice j trains with seed + j
        max_iters: Lloyd iteration cap

    Raises:
        ArgumentError: m does not divide d, or l out of range
    """
    data = residuals.data
    n, d = data.shape
    if m < 1 or d % m != 0:
        raise ArgumentError(f"m={m} does not divide d={d}")
    if not 1 <= l <= 256:
        raise ArgumentError(f"l must be in [1, 256], got {l}")
    if l > n:
        raise ArgumentError(f"l={l} exceeds the {n} training residuals")

    sub_dim = d // m
    tables = np.empty((m, l, sub_dim), dtype=np.float32)
    logger.info(f"Training PQ codebooks: m={m}, l={l}, sub_dim={sub_dim}, n={n}")
    for j in range(m):
        piece = np.ascontiguousarray(data[:, j * sub_dim:(j + 1) * sub_dim], dtype=np.float32)
        model = lloyd(piece, l, max_iters, seed + j)
        tables[j] = model.centroids
        logger.debug(f"Sub-codebook {j}: objective={model.objective:.4f}")
    return PQCodebook(tables)


def validate_dim(codebook: PQCodebook, width: int) -> None:
    if width != codebook.d:
        raise ArgumentError(f"Vector dimension {width} != codebook dimension {codebook.d}")


def encode_batch(codebook: PQCodebook, residuals: np.ndarray) -> np.ndarray:
    """
    Nearest codeword per slice for every row (ties to the lower index).

    Returns:
        (n, m) uint8 codes
    """
    rows = np.atleast_2d(np.asarray(residuals))
    validate_dim(codebook, rows.shape[1])
    codes = np.empty((rows.shape[0], codebook.m), dtype=np.uint8)
    s = codebook.sub_dim
    for j in range(codebook.m):
        labels, _ = nearest_rows(rows[:, j * s:(j + 1) * s], codebook.tables[j])
        codes[:, j] = labels
    return codes


def encode(codebook: PQCodebook, residual: np.ndarray) -> PQCode:
    residual = np.asarray(residual).reshape(-1)
    return encode_batch(codebook, residual[None, :])[0]


def validate_codes(codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    codes = np.atleast_2d(np.asarray(codes))
    if codes.shape[1] != codebook.m:
        raise ArgumentError(f"Code length {codes.shape[1]} != m={codebook.m}")
    if codes.size and (codes.min() < 0 or codes.max() >= codebook.l):
        raise ArgumentError(f"Code entries must be in [0, {codebook.l})")
    return codes.astype(np.intp)


def decode_batch(codebook: PQCodebook, codes: np.ndarray) -> np.ndarray:
    """(n, m) codes -> (n, d) float32 concatenated codewords."""
    codes = validate_codes(codebook, codes)
    picked = codebook.tables[np.arange(codebook.m)[None, :], codes]
    return picked.reshape(codes.shape[0], codebook.d)


def decode(codebook: PQCodebook, code: PQCode) -> np.ndarray:
    """
    Raises:
        ArgumentError: an entry is >= l or the code length is not m
    """
    return decode_batch(codebook, np.asarray(code).reshape(1, -1))[0]


def precompute_term(codebook: PQCodebook, centroid: np.ndarray, code: PQCode) -> float:
    """
    Term-B + Term-C for one encoded vector:
    sum_j ||c^j_code[j]||^2 + 2 sum_j <centroid^j, c^j_code[j]>.
    """
    centroid = np.asarray(centroid, dtype=np.float64).reshape(-1)
    validate_dim(codebook, centroid.shape[0])
    words = decode(codebook, code).astype(np.float64)
    return float((words * words).sum() + 2.0 * (centroid * words).sum())


def precompute_terms(codebook: PQCodebook, centroids: np.ndarray,
                     assignments: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """
    precompute_term for every vector, using a per-codeword norm table for Term-B.

    Args:
        centroids: (n_cluster, d) cluster centroids
        assignments: (n,) cluster of each vector
        codes: (n, m) PQ codes

    Returns:
        (n,) float32 cached terms
    """
    codes = validate_codes(codebook, codes)
    norms = codebook.squared_norms()
    term_b = norms[np.arange(codebook.m)[None, :], codes].sum(axis=1)

    term_c = np.empty(codes.shape[0], dtype=np.float64)
    for start in range(0, codes.shape[0], TERM_BLOCK_ROWS):
        stop = start + TERM_BLOCK_ROWS
        words = decode_batch(codebook, codes[start:stop]).astype(np.float64)
        owners = np.asarray(centroids, dtype=np.float64)[assignments[start:stop]]
        term_c[start:stop] = 2.0 * (owners * words).sum(axis=1)

    return (term_b + term_c).astype(np.float32)


def reconstruction_error(codebook: PQCodebook, residuals: np.ndarray) -> float:
    """Mean squared error of decode(encode(r)) over the given rows."""
    rows = np.atleast_2d(np.asarray(residuals, dtype=np.float64))
    approx = decode_batch(codebook, encode_batch(codebook, rows)).astype(np.float64)
    diff = rows - approx
    return float((diff * diff).sum(axis=1).mean())
