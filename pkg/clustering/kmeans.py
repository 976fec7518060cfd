# clustering/kmeans.py
"""
First-level coarse partitioning with Lloyd's k-means.

k-means++ seeding, exact Lloyd iterations with early stop on zero label
changes, and empty-cluster repair by splitting the largest cluster.
The same trainer is reused for the PQ sub-codebooks.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple, Union

import numpy as np

from core.distances import nearest_rows
from core.errors import ArgumentError
from core.types import VectorDataset

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 25
# above this many points, train on a 256*k subsample
FULL_TRAINING_LIMIT = 1_000_000
SAMPLES_PER_CENTROID = 256


@dataclass(frozen=True)
class ClusterModel:
    """
    Trained coarse quantizer.

    Args:
        centroids: (n_cluster, d) float32
        assignments: (n,) int64 cluster id per training vector
        sizes: (n_cluster,) int64 vectors per cluster
        objective_history: sum of squared distances after each assignment step
        iterations: Lloyd iterations run
    """
    centroids: np.ndarray
    assignments: np.ndarray
    sizes: np.ndarray
    objective_history: List[float] = field(default_factory=list)
    iterations: int = 0

    @property
    def n_cluster(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]

    @property
    def objective(self) -> float:
        return self.objective_history[-1] if self.objective_history else 0.0


@dataclass(frozen=True)
class Residuals:
    """r_i = y_i - centroid(assignment(i)), float64 (n, d)."""
    data: np.ndarray


def _as_array(data: Union[VectorDataset, np.ndarray]) -> np.ndarray:
    if isinstance(data, VectorDataset):
        return data.data
    return np.ascontiguousarray(data, dtype=np.float32)


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """
    k-means++ seeding: each next centre is drawn with probability proportional
    to its squared distance from the nearest centre chosen so far.

    When every remaining point coincides with a chosen centre the potential is
    zero; further centres are then taken from unchosen points in index order.

    Returns:
        (k,) int64 row indices of the chosen seeds
    """
    n = points.shape[0]
    points64 = points.astype(np.float64)
    chosen = np.empty(k, dtype=np.int64)
    taken = np.zeros(n, dtype=bool)

    first = int(rng.integers(n))
    chosen[0] = first
    taken[first] = True
    diff = points64 - points64[first]
    closest = (diff * diff).sum(axis=1)

    for i in range(1, k):
        potential = closest.sum()
        if potential > 0.0:
            nxt = int(np.searchsorted(np.cumsum(closest), rng.random() * potential, side='right'))
            nxt = min(nxt, n - 1)
            # floating-point edge: never pick a zero-potential point while mass remains
            if closest[nxt] == 0.0:
                nxt = int(np.flatnonzero(closest > 0.0)[0])
        else:
            nxt = int(np.flatnonzero(~taken)[0])
        chosen[i] = nxt
        taken[nxt] = True
        diff = points64 - points64[nxt]
        np.minimum(closest, (diff * diff).sum(axis=1), out=closest)

    return chosen


def _repair_empty(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray,
                  distances: np.ndarray, sizes: np.ndarray) -> int:
    """
    Re-seed every empty centroid at the farthest member of the current largest cluster.
    Mutates centroids, labels, distances and sizes in place.

    Returns:
        Number of centroids re-seeded
    """
    repaired = 0
    for empty in np.flatnonzero(sizes == 0):
        largest = int(np.argmax(sizes))
        if sizes[largest] <= 1:
            break
        members = np.flatnonzero(labels == largest)
        farthest = int(members[np.argmax(distances[members])])
        centroids[empty] = points[farthest]
        labels[farthest] = empty
        distances[farthest] = 0.0
        sizes[largest] -= 1
        sizes[empty] = 1
        repaired += 1
    return repaired


def lloyd(points: np.ndarray, k: int, max_iters: int = DEFAULT_MAX_ITERS,
          seed: int = 0) -> ClusterModel:
    """
    Lloyd's k-means on a raw (n, d) array.

    Args:
        points: Training vectors
        k: Cluster count, 1 <= k <= n
        max_iters: Iteration cap
        seed: RNG seed; identical inputs give bit-identical centroids

    Returns:
        ClusterModel whose assignments are consistent with its final centroids
    """
    points = _as_array(points)
    n, d = points.shape
    if not 1 <= k <= n:
        raise ArgumentError(f"k must be in [1, n={n}], got {k}")
    if max_iters < 1:
        raise ArgumentError(f"max_iters must be >= 1, got {max_iters}")

    rng = np.random.default_rng(seed)
    centroids = points[kmeans_plusplus(points, k, rng)].astype(np.float32)

    labels, distances = nearest_rows(points, centroids)
    history = [float(distances.sum())]
    iterations = 0

    # past max_iters, keep iterating (bounded) only while some cluster is empty
    while iterations < 2 * max_iters:
        iterations += 1
        sizes = np.bincount(labels, minlength=k)
        repaired = _repair_empty(points, centroids, labels, distances, sizes)
        if repaired:
            logger.warning(f"Re-seeded {repaired} empty clusters at iteration {iterations}")

        # deterministic reduction: bincount sums in index order
        sums = np.zeros((k, d), dtype=np.float64)
        for j in range(d):
            sums[:, j] = np.bincount(labels, weights=points[:, j], minlength=k)
        occupied = sizes > 0
        centroids[occupied] = (sums[occupied] / sizes[occupied, None]).astype(np.float32)

        new_labels, distances = nearest_rows(points, centroids)
        changed = int((new_labels != labels).sum())
        labels = new_labels
        history.append(float(distances.sum()))
        logger.debug(f"k-means iter {iterations}: objective={history[-1]:.4f}, changed={changed}")

        has_empty = np.bincount(labels, minlength=k).min() == 0
        if changed == 0 and not repaired and not has_empty:
            break
        if iterations >= max_iters and not has_empty:
            break

    sizes = np.bincount(labels, minlength=k).astype(np.int64)
    centroids.setflags(write=False)
    labels.setflags(write=False)
    return ClusterModel(
        centroids=centroids,
        assignments=labels,
        sizes=sizes,
        objective_history=history,
        iterations=iterations,
    )


def kmeans_train(dataset: VectorDataset, k: int, max_iters: int = DEFAULT_MAX_ITERS,
                 seed: int = 0) -> ClusterModel:
    """
    Partition the database into k clusters.

    For n above FULL_TRAINING_LIMIT the centroids are trained on a seeded
    256*k subsample and every vector is then assigned to the trained centroids.

    Raises:
        ArgumentError: k > n or k < 1
    """
    if not 1 <= k <= dataset.n:
        raise ArgumentError(f"k must be in [1, n={dataset.n}], got {k}")

    logger.info(f"Training k-means: n={dataset.n}, d={dataset.d}, k={k}, max_iters={max_iters}")
    if dataset.n <= FULL_TRAINING_LIMIT:
        model = lloyd(dataset.data, k, max_iters, seed)
    else:
        sample_size = min(dataset.n, SAMPLES_PER_CENTROID * k)
        sample = np.random.default_rng(seed).choice(dataset.n, size=sample_size, replace=False)
        sample.sort()
        logger.info(f"Subsampling {sample_size} training points")
        trained = lloyd(dataset.data[sample], k, max_iters, seed)
        labels, distances = nearest_rows(dataset.data, trained.centroids)
        labels.setflags(write=False)
        model = ClusterModel(
            centroids=trained.centroids,
            assignments=labels,
            sizes=np.bincount(labels, minlength=k).astype(np.int64),
            objective_history=trained.objective_history + [float(distances.sum())],
            iterations=trained.iterations,
        )

    logger.info(
        f"k-means done after {model.iterations} iterations, objective={model.objective:.4f}"
    )
    return model


def assign_batch(model: ClusterModel, vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nearest centroid for every row (ties to the lower id).

    Returns:
        (cluster ids int64, squared distances float64)
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float32))
    if vectors.shape[1] != model.d:
        raise ArgumentError(f"Vector dimension {vectors.shape[1]} != centroid dimension {model.d}")
    return nearest_rows(vectors, model.centroids)


def assign(model: ClusterModel, vector: np.ndarray) -> Tuple[int, float]:
    """
    Nearest centroid of one vector.

    Returns:
        (cluster id, squared distance)
    """
    vector = np.asarray(vector, dtype=np.float32).reshape(-1)
    labels, distances = assign_batch(model, vector[None, :])
    return int(labels[0]), float(distances[0])


def objective(dataset: VectorDataset, model: ClusterModel) -> float:
    """Sum of squared distances from each vector to its assigned centroid."""
    diff = dataset.data.astype(np.float64) - model.centroids[model.assignments].astype(np.float64)
    return float((diff * diff).sum())


def compute_residuals(dataset: VectorDataset, model: ClusterModel) -> Residuals:
    """
    r_i = y_i - c_{CID[i]}, element-wise in float64 from the float32 operands.

    Raises:
        ArgumentError: Model was trained on a different dimension or vector count
    """
    if model.d != dataset.d:
        raise ArgumentError(f"Model dimension {model.d} != dataset dimension {dataset.d}")
    if model.assignments.shape[0] != dataset.n:
        raise ArgumentError(
            f"Model holds {model.assignments.shape[0]} assignments for {dataset.n} vectors"
        )
    # float64 difference of float32 operands is exact, so residual + centroid restores y
    residuals = (dataset.data.astype(np.float64)
                 - model.centroids[model.assignments].astype(np.float64))
    residuals.setflags(write=False)
    return Residuals(residuals)
