# core/types.py
"""
Domain types shared across the engine: the vector dataset, index build
configuration, query parameters and evaluation metrics.
All of them are immutable after construction.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from core.errors import ArgumentError


@dataclass(frozen=True)
class VectorDataset:
    """
    N row-major D-dimensional float32 vectors. Vector ids are the row numbers 0..n-1.

    Args:
        data: (n, d) array; copied to a read-only C-contiguous float32 array
        elem_bytes: bytes per scalar used in memory accounting (f = 4)
    """
    data: np.ndarray
    elem_bytes: int = 4

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ArgumentError(f"Dataset must be 2-dimensional, got shape {data.shape}")
        n, d = data.shape
        if n <= 0 or d <= 0:
            raise ArgumentError(f"Dataset needs n > 0 and d > 0, got n={n}, d={d}")
        if not np.isfinite(data).all():
            raise ArgumentError("Dataset contains NaN or Inf values")
        if data is self.data:
            data = data.copy()
        data.setflags(write=False)
        object.__setattr__(self, 'data', data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.n, dtype=np.int64)

    def __len__(self) -> int:
        return self.n

    def row(self, vector_id: int) -> np.ndarray:
        if not 0 <= vector_id < self.n:
            raise ArgumentError(f"Vector id {vector_id} outside [0, {self.n})")
        return self.data[vector_id]

    def subset(self, ids) -> 'VectorDataset':
        """Dataset made of the given rows, renumbered 0..len(ids)-1."""
        return VectorDataset(self.data[np.asarray(ids, dtype=np.int64)])


@dataclass(frozen=True)
class SearchParams:
    """
    Per-query knobs of the online search.

    Args:
        k: neighbours to return
        r: candidate-list size produced by the preview step
        nscan: clusters to scan
        ef_search: routing queue bound
        preview_only: skip the full-view rerank and return preview distances
        exhaustive_routing: select clusters by exact centroid scan instead of the graph
    """
    k: int = 10
    r: int = 50
    nscan: int = 64
    ef_search: int = 320
    preview_only: bool = False
    exhaustive_routing: bool = False

    def __post_init__(self):
        if not 1 <= self.k <= self.r:
            raise ArgumentError(f"Need 1 <= k <= r, got k={self.k}, r={self.r}")
        if self.nscan < 1:
            raise ArgumentError(f"nscan must be >= 1, got {self.nscan}")
        if self.ef_search < self.nscan:
            raise ArgumentError(
                f"ef_search ({self.ef_search}) must be >= nscan ({self.nscan})"
            )

    @property
    def mode(self) -> str:
        mode = 'preview_only' if self.preview_only else 'full'
        return f"{mode}+exhaustive" if self.exhaustive_routing else mode


@dataclass(frozen=True)
class ZoomConfig:
    """
    Build-time configuration of the preview index.

    Args:
        n_cluster: first-level cluster count
        m: PQ sub-dimensions
        l: codewords per sub-codebook (<= 256, one byte per sub-code)
        out_d: routing-graph out-degree
        seed: RNG seed for every randomised build step
        ef_construction: routing build queue bound
        kmeans_max_iters: Lloyd iteration cap for both clustering levels
    """
    n_cluster: int = 1024
    m: int = 8
    l: int = 256
    out_d: int = 10
    seed: int = 42
    ef_construction: int = 40
    kmeans_max_iters: int = 25

    def __post_init__(self):
        if self.n_cluster < 1:
            raise ArgumentError(f"n_cluster must be >= 1, got {self.n_cluster}")
        if self.m < 1:
            raise ArgumentError(f"m must be >= 1, got {self.m}")
        if not 1 <= self.l <= 256:
            raise ArgumentError(f"l must be in [1, 256], got {self.l}")
        if self.out_d < 2:
            raise ArgumentError(f"out_d must be >= 2, got {self.out_d}")
        if self.ef_construction < 1:
            raise ArgumentError(f"ef_construction must be >= 1, got {self.ef_construction}")
        if self.kmeans_max_iters < 1:
            raise ArgumentError(f"kmeans_max_iters must be >= 1, got {self.kmeans_max_iters}")

    def check_dimension(self, d: int) -> None:
        """Raise unless this config can be applied to d-dimensional vectors."""
        if d % self.m != 0:
            raise ArgumentError(f"m={self.m} does not divide d={d}")


@dataclass(frozen=True)
class Metrics:
    """
    Evaluation summary for one parameter point.

    Times are milliseconds; vq is vectors-per-machine x queries-per-second.
    """
    recall: float
    latency_ms: float
    t_cs_ms: float
    t_vs_ms: float
    t_rerank_ms: float
    memory_bytes: int
    vq: float
    latency_p99_ms: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.recall <= 1.0:
            raise ArgumentError(f"recall must be in [0, 1], got {self.recall}")
