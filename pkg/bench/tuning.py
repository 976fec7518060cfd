# bench/tuning.py
"""
Two-step parameter tuning.

Step 1 picks every (n_cluster, m) whose modelled memory fits the memory
target (MOT). Step 2 builds each candidate and grid-searches (ef_search,
nscan, r), keeping the point with the highest VQ among those that meet the
recall target. When nothing qualifies the MOT is raised by 25% and the search
repeats, up to three times. A config is built and evaluated once; later
attempts only visit the configs the raised MOT newly admits.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from bench.ground_truth import GroundTruth
from bench.runner import BENCH_COLUMNS, param_grid, run_point
from core.errors import TuningError
from core.metrics import memory_cost
from core.types import SearchParams, VectorDataset, ZoomConfig
from zoom.index import ZoomIndex, build

logger = logging.getLogger(__name__)

N_CLUSTER_MULTIPLIERS = (1, 2, 4, 8)
ESCALATION_FACTOR = 1.25
MAX_ESCALATIONS = 3
TUNE_COLUMNS = ['attempt', 'mot', 'n_cluster', 'm', 'l'] + BENCH_COLUMNS


@dataclass(frozen=True)
class TuneSpec:
    """
    Args:
        memory_target_bytes: MOT, the modelled memory budget of the preview index
        recall_target: required recall@k, in [0, 1]
        k: neighbours per query
        ef_grid / nscan_grid / r_grid: step-2 search grids
    """
    memory_target_bytes: int
    recall_target: float
    k: int = 1
    ef_grid: Tuple[int, ...] = (64, 128, 320)
    nscan_grid: Tuple[int, ...] = (8, 16, 32, 64)
    r_grid: Tuple[int, ...] = (10, 50, 100)
    max_escalations: int = MAX_ESCALATIONS

    def __post_init__(self):
        if not 0.0 <= self.recall_target <= 1.0:
            raise TuningError(f"recall_target must be in [0, 1], got {self.recall_target}")
        if self.memory_target_bytes <= 0:
            raise TuningError(f"memory_target_bytes must be positive, got {self.memory_target_bytes}")
        if not (self.ef_grid and self.nscan_grid and self.r_grid):
            raise TuningError("ef_search, nscan and r grids must be non-empty")
        if self.k < 1:
            raise TuningError(f"k must be >= 1, got {self.k}")


@dataclass
class TuneResult:
    """
    success is False when no evaluated point met the recall target; row then
    holds the highest-recall point seen.
    """
    success: bool
    config: Optional[ZoomConfig]
    params: Optional[SearchParams]
    row: Dict[str, object]
    report: pd.DataFrame
    mot: int
    escalations: int
    candidates_built: List[Tuple[int, int]] = field(default_factory=list)


def _divisors(d: int) -> List[int]:
    return [m for m in range(1, d + 1) if d % m == 0]


def candidate_configs(n: int, d: int, mot: float, base: ZoomConfig = ZoomConfig()) -> List[ZoomConfig]:
    """
    Step 1: every (n_cluster, m) with memory_cost <= mot, cheapest first.

    n_cluster comes from {1, 2, 4, 8} x round(sqrt(n)) capped at n, m from the
    divisors of d, l = min(256, n).
    """
    root = max(1, round(math.sqrt(n)))
    n_clusters = sorted({min(n, mult * root) for mult in N_CLUSTER_MULTIPLIERS})
    l = min(256, n)
    configs = []
    for n_cluster in n_clusters:
        for m in _divisors(d):
            config = ZoomConfig(
                n_cluster=n_cluster, m=m, l=l, out_d=base.out_d, seed=base.seed,
                ef_construction=base.ef_construction, kmeans_max_iters=base.kmeans_max_iters,
            )
            if memory_cost(config, n, d) <= mot:
                configs.append(config)
    configs.sort(key=lambda c: (memory_cost(c, n, d), c.n_cluster, c.m))
    return configs


def minimal_memory_cost(n: int, d: int, base: ZoomConfig = ZoomConfig()) -> int:
    """Smallest modelled memory over the step-1 grid."""
    return min(memory_cost(c, n, d) for c in candidate_configs(n, d, float('inf'), base))


def tune(spec: TuneSpec, dataset: VectorDataset, queries: VectorDataset, truth: GroundTruth,
         workdir: str, base: ZoomConfig = ZoomConfig(), io_mode: Optional[str] = None) -> TuneResult:
    """
    Run both tuning steps.

    Args:
        workdir: Directory for the full-view files of candidate builds

    Returns:
        TuneResult; an unmet target is reported through success=False
    """
    os.makedirs(workdir, exist_ok=True)
    built: Dict[Tuple[int, int], ZoomIndex] = {}
    rows: List[Dict[str, object]] = []
    mot = float(spec.memory_target_bytes)
    best: Optional[Tuple[Dict[str, object], ZoomConfig, SearchParams]] = None

    try:
        for attempt in range(spec.max_escalations + 1):
            configs = candidate_configs(dataset.n, dataset.d, mot, base)
            logger.info(f"Tuning attempt {attempt}: MOT={int(mot)} bytes, {len(configs)} candidate configs")

            for config in configs:
                key = (config.n_cluster, config.m)
                # configs from earlier attempts already missed the target
                if key in built:
                    continue
                path = os.path.join(workdir, f"fullview_nc{config.n_cluster}_m{config.m}.bin")
                built[key] = build(dataset, config, path, io_mode=io_mode)
                index = built[key]
                r_values = [r for r in spec.r_grid if r >= spec.k] or [spec.k]
                try:
                    grid = param_grid([spec.k], r_values, spec.nscan_grid, spec.ef_grid,
                                      n_cluster=config.n_cluster)
                except ValueError:
                    logger.warning(f"No valid search grid for n_cluster={config.n_cluster}")
                    continue

                for params in grid:
                    row = run_point(index, queries, truth, params, warmup=False)
                    row = {'attempt': attempt, 'mot': int(mot), 'n_cluster': config.n_cluster,
                           'm': config.m, 'l': config.l, **row}
                    rows.append(row)
                    if row['recall'] >= spec.recall_target and (best is None or row['vq'] > best[0]['vq']):
                        best = (row, config, params)

            if best is not None:
                row, config, params = best
                logger.info(
                    f"Tuned: n_cluster={config.n_cluster}, m={config.m}, nscan={params.nscan}, "
                    f"ef_search={params.ef_search}, r={params.r} -> recall={row['recall']:.4f}, "
                    f"vq={row['vq']:.3e}"
                )
                return TuneResult(True, config, params, row, pd.DataFrame(rows, columns=TUNE_COLUMNS),
                                  int(mot), attempt, sorted(built))

            if attempt < spec.max_escalations:
                logger.warning(
                    f"No configuration reached recall {spec.recall_target} under MOT={int(mot)}; "
                    f"raising MOT by {int((ESCALATION_FACTOR - 1) * 100)}%"
                )
                mot *= ESCALATION_FACTOR
    finally:
        for index in built.values():
            index.close()

    report = pd.DataFrame(rows, columns=TUNE_COLUMNS)
    fallback = report.sort_values('recall', ascending=False).iloc[0].to_dict() if rows else {}
    logger.warning(f"Tuning failed after {spec.max_escalations} MOT escalations")
    return TuneResult(False, None, None, fallback, report, int(mot), spec.max_escalations,
                      sorted(built))
