# core/metrics.py
"""
Evaluation metrics: recall, the index memory model and the VQ efficiency metric.
"""

import math
from fractions import Fraction
from typing import Dict, Iterable

from core.errors import ArgumentError
from core.types import ZoomConfig


def recall(found: Iterable[int], truth: Iterable[int], k: int) -> float:
    """
    |found ∩ truth| / k.

    Raises:
        ArgumentError: Either set does not hold exactly k distinct ids
    """
    found_set = set(int(i) for i in found)
    truth_set = set(int(i) for i in truth)
    if len(found_set) != k or len(truth_set) != k:
        raise ArgumentError(
            f"recall needs k={k} distinct ids on both sides, "
            f"got |found|={len(found_set)}, |truth|={len(truth_set)}"
        )
    return len(found_set & truth_set) / k


def candidate_hit_rate(truth: Iterable[int], candidates: Iterable[int], k: int) -> float:
    """Fraction of the true top-k ids present anywhere in a candidate list."""
    truth_list = [int(i) for i in truth][:k]
    if len(truth_list) != k:
        raise ArgumentError(f"Need at least k={k} truth ids, got {len(truth_list)}")
    candidate_set = set(int(i) for i in candidates)
    return sum(1 for i in truth_list if i in candidate_set) / k


def code_bits(l: int) -> int:
    """Bits per sub-code: log2(L), rounded up for non powers of two."""
    return max(1, math.ceil(math.log2(l))) if l > 1 else 0


def memory_breakdown(config: ZoomConfig, n: int, d: int, f: int = 4) -> Dict[str, Fraction]:
    """
    The three components of the index memory model.

    Returns:
        {'codes': N x (M log2(L)/8 + f),
         'codebook': L x D x f,
         'routing': N_cluster x (D + OutD) x f}
    """
    per_vector = Fraction(config.m * code_bits(config.l), 8) + f
    return {
        'codes': n * per_vector,
        'codebook': Fraction(config.l * d * f),
        'routing': Fraction(config.n_cluster * (d + config.out_d) * f),
    }


def memory_cost(config: ZoomConfig, n: int, d: int, f: int = 4) -> int:
    """
    Index memory in bytes:
    N x (M x log2(L)/8 + f) + L x D x f + N_cluster x (D + OutD) x f.

    Fractional bytes from sub-byte codes are rounded up once on the total.
    """
    return math.ceil(sum(memory_breakdown(config, n, d, f).values()))


def vq(latency_ms: float, memory_bytes: float, machine_memory_bytes: float,
       n_vectors: int = 1) -> float:
    """
    Vectors per machine x queries per second.

    Args:
        latency_ms: Mean per-query latency
        memory_bytes: Index memory for n_vectors vectors
        machine_memory_bytes: Memory budget of one machine
        n_vectors: Vectors covered by memory_bytes

    Returns:
        (machine_memory_bytes x n_vectors / memory_bytes) x (1000 / latency_ms)
    """
    if latency_ms <= 0:
        raise ArgumentError(f"latency_ms must be positive, got {latency_ms}")
    if memory_bytes <= 0:
        raise ArgumentError(f"memory_bytes must be positive, got {memory_bytes}")
    vectors_per_machine = machine_memory_bytes * n_vectors / memory_bytes
    return vectors_per_machine * (1000.0 / latency_ms)


def vq_improvement(lat_a: float, mem_a: float, lat_b: float, mem_b: float) -> float:
    """VQ of system B relative to system A: latency speedup x memory reduction."""
    if lat_b <= 0 or mem_b <= 0:
        raise ArgumentError("Latency and memory of the compared system must be positive")
    return (lat_a / lat_b) * (mem_a / mem_b)
