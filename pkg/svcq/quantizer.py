"""KMeans++ seeding, full-batch Lloyd training and nearest-centroid assignment.

Distances are Euclidean. :func:`assign` evaluates them directly and is the
reference; the batched path uses the expanded form
``|x|^2 - 2 x.c + |c|^2`` and re-evaluates near ties directly, so both paths
return the same code ids, lowest id first on exact ties.
"""

import logging as _logging
import math as _math
from dataclasses import dataclass as _dataclass
from typing import Tuple as _Tuple

import numpy as _np

from .codebook import Codebook as _Codebook
from .codebook import TrainingMeta as _TrainingMeta
from .errors import ConvergenceError as _ConvergenceError
from .errors import DimensionMismatch as _DimensionMismatch
from .errors import InvalidValue as _InvalidValue
from .errors import NonFiniteData as _NonFiniteData
from .errors import NonFiniteInput as _NonFiniteInput
from .errors import TooFewPoints as _TooFewPoints
from .tier import Tier as _Tier

_LOGGER = _logging.getLogger(__name__)

DEFAULT_MAX_ITERS = 100
DEFAULT_TOL = 1e-4

_CHUNK_ROWS = 4096
_TIE_MARGIN = 1e-9
# slack for float64 summation noise when comparing successive inertias
_INERTIA_SLACK = 1e-9


@_dataclass(frozen=True)
class TrainingStats:
    inertia_history: _Tuple[float, ...]
    iterations_run: int
    empty_cluster_reassignments: int
    converged: bool
    final_inertia: float

    def __post_init__(self):
        history = tuple(float(value) for value in self.inertia_history)
        object.__setattr__(self, "inertia_history", history)
        for previous, current in zip(history, history[1:]):
            if current > previous * (1 + _INERTIA_SLACK) + 1e-12:
                raise _InvalidValue(
                    f"TrainingStats: inertia increased from {previous} to {current}"
                )

    @property
    def init_inertia(self) -> float:
        return self.inertia_history[0] if self.inertia_history else self.final_inertia

    def to_dict(self) -> dict:
        return {
            "inertia_history": list(self.inertia_history),
            "iterations_run": self.iterations_run,
            "empty_cluster_reassignments": self.empty_cluster_reassignments,
            "converged": self.converged,
            "final_inertia": self.final_inertia,
        }


def _as_data(data, error=_NonFiniteData):
    data = _np.asarray(data, dtype=_np.float64)
    if data.ndim != 2:
        raise _InvalidValue(f"expected an N x D matrix, got shape {data.shape}")
    if not _np.all(_np.isfinite(data)):
        raise error("data contains NaN or Inf values")
    return data


def _exact_nearest(vector, centroids):
    distances = ((centroids - vector) ** 2).sum(axis=1)
    best = int(_np.argmin(distances))
    return best, float(distances[best])


def _nearest(rows, centroids):
    """Code ids and exact squared distances of ``rows`` to their nearest centroid."""
    num_rows = rows.shape[0]
    labels = _np.empty(num_rows, dtype=_np.int64)
    distances = _np.empty(num_rows, dtype=_np.float64)
    centroid_norms = _np.einsum("ij,ij->i", centroids, centroids)
    largest_norm = centroid_norms.max() if centroid_norms.size else 0.0

    for start in range(0, num_rows, _CHUNK_ROWS):
        block = rows[start : start + _CHUNK_ROWS]
        partial = centroid_norms[None, :] - 2.0 * (block @ centroids.T)
        best = _np.argmin(partial, axis=1)
        best_partial = partial[_np.arange(block.shape[0]), best]

        row_norms = _np.einsum("ij,ij->i", block, block)
        margin = _TIE_MARGIN * (row_norms + largest_norm) + 1e-300
        ambiguous = (partial <= (best_partial + margin)[:, None]).sum(axis=1) > 1

        block_distances = ((block - centroids[best]) ** 2).sum(axis=1)
        for row in _np.flatnonzero(ambiguous):
            best[row], block_distances[row] = _exact_nearest(block[row], centroids)

        labels[start : start + block.shape[0]] = best
        distances[start : start + block.shape[0]] = block_distances
    return labels, distances


def kmeanspp_init(data, k: int, seed: int = 0) -> _np.ndarray:
    """Pick ``k`` data rows as initial centroids by D^2 sampling.

    The first centroid is drawn uniformly; each further one with probability
    proportional to the squared distance to the nearest centroid chosen so far.
    """
    data = _as_data(data)
    num_points = data.shape[0]
    if k < 1:
        raise _InvalidValue(f"k must be >= 1, got {k}")
    if num_points < k:
        raise _TooFewPoints(
            f"{num_points} points cannot seed {k} centroids",
            available=num_points,
            required=k,
        )

    rng = _np.random.default_rng(seed)
    chosen = [int(rng.integers(num_points))]
    closest = ((data - data[chosen[0]]) ** 2).sum(axis=1)
    closest[chosen[0]] = 0.0

    for _ in range(1, k):
        cumulative = _np.cumsum(closest)
        total = cumulative[-1]
        if total > 0:
            target = rng.random() * total
            index = int(_np.searchsorted(cumulative, target, side="right"))
            index = min(index, num_points - 1)
        else:
            # only duplicates of chosen rows remain
            remaining = _np.setdiff1d(_np.arange(num_points), chosen)
            index = int(remaining[rng.integers(remaining.shape[0])])
        chosen.append(index)
        closest = _np.minimum(closest, ((data - data[index]) ** 2).sum(axis=1))
        closest[index] = 0.0

    return data[chosen].copy()


def lloyd_train(
    data,
    init,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    tier=_Tier.Frame,
    seed: int = 0,
) -> _Tuple[_Codebook, TrainingStats]:
    """Alternate nearest-centroid assignment and mean update until centroids settle.

    Stops when the largest centroid displacement drops below ``tol`` or after
    ``max_iters`` iterations. A cluster left empty is re-seeded with the point
    farthest from its own centroid.
    """
    data = _as_data(data)
    centroids = _np.array(init, dtype=_np.float64, copy=True)
    if centroids.ndim != 2 or centroids.shape[1] != data.shape[1]:
        raise _DimensionMismatch(
            f"init of shape {centroids.shape} does not fit data of dim {data.shape[1]}",
            expected=data.shape[1],
            actual=centroids.shape[-1],
        )
    k = centroids.shape[0]
    if data.shape[0] < k:
        raise _TooFewPoints(
            f"{data.shape[0]} points cannot train {k} centroids",
            tier=tier,
            available=data.shape[0],
            required=k,
        )
    if max_iters < 1 or tol < 0:
        raise _InvalidValue("lloyd_train: need max_iters >= 1 and tol >= 0")

    history = []
    reassignments = 0
    converged = False
    iterations = 0
    for iterations in range(1, max_iters + 1):
        labels, distances = _nearest(data, centroids)
        inertia = float(distances.sum())
        if history and inertia > history[-1] * (1 + _INERTIA_SLACK) + 1e-12:
            raise _ConvergenceError(
                f"[{tier}]: inertia rose from {history[-1]} to {inertia}"
                f" in iteration {iterations}"
            )
        history.append(inertia)

        sums = _np.zeros_like(centroids)
        _np.add.at(sums, labels, data)
        counts = _np.bincount(labels, minlength=k)
        updated = centroids.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]

        empty = _np.flatnonzero(~filled)
        if empty.size:
            spread = ((data - updated[labels]) ** 2).sum(axis=1)
            for cluster in empty:
                farthest = int(_np.argmax(spread))
                updated[cluster] = data[farthest]
                spread[farthest] = -1.0
            reassignments += int(empty.size)
            _LOGGER.debug("[%s]: re-seeded %d empty clusters", tier, empty.size)

        displacement = float(_np.sqrt(((updated - centroids) ** 2).sum(axis=1)).max())
        centroids = updated
        if displacement < tol:
            converged = True
            break

    _, distances = _nearest(data, centroids)
    final_inertia = float(distances.sum())
    stats = TrainingStats(tuple(history), iterations, reassignments, converged, final_inertia)
    _LOGGER.info(
        "[%s]: k=%d, %d iterations, inertia %.6g -> %.6g%s",
        tier,
        k,
        iterations,
        stats.init_inertia,
        final_inertia,
        "" if converged else " (not converged)",
    )
    codebook = _Codebook(tier, centroids, _TrainingMeta(seed, iterations, final_inertia))
    return codebook, stats


def train_codebook(
    data,
    k: int,
    seed: int = 0,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
    tier=_Tier.Frame,
):
    """KMeans++ initialization followed by Lloyd training."""
    data = _as_data(data)
    if data.shape[0] < k:
        raise _TooFewPoints(
            f"{data.shape[0]} training vectors for k={k}",
            tier=tier,
            available=data.shape[0],
            required=k,
        )
    init = kmeanspp_init(data, k, seed)
    return lloyd_train(data, init, max_iters, tol, tier=tier, seed=seed)


def _check_query(codebook, rows):
    if rows.shape[-1] != codebook.dim:
        raise _DimensionMismatch(
            f"{codebook} has dim {codebook.dim}, query has dim {rows.shape[-1]}",
            expected=codebook.dim,
            actual=rows.shape[-1],
        )
    if not _np.all(_np.isfinite(rows)):
        raise _NonFiniteInput(f"{codebook}: query contains NaN or Inf values")


def assign(codebook: _Codebook, vector) -> int:
    """Index of the centroid nearest to ``vector``; the lowest index wins ties."""
    vector = _np.asarray(vector, dtype=_np.float64)
    if vector.ndim != 1:
        raise _InvalidValue(f"assign expects a vector, got shape {vector.shape}")
    _check_query(codebook, vector)
    code, _ = _exact_nearest(vector, codebook.centroids.astype(_np.float64))
    return code


def assign_batch(codebook: _Codebook, matrix) -> _np.ndarray:
    """Row-wise :func:`assign` for an M x D matrix."""
    matrix = _np.asarray(matrix, dtype=_np.float64)
    if matrix.ndim != 2:
        raise _InvalidValue(f"assign_batch expects a matrix, got shape {matrix.shape}")
    _check_query(codebook, matrix)
    if matrix.shape[0] == 0:
        return _np.empty(0, dtype=_np.int64)
    labels, _ = _nearest(matrix, codebook.centroids.astype(_np.float64))
    return labels


def inertia(codebook: _Codebook, data) -> float:
    """Sum of squared distances from ``data`` rows to their nearest centroid."""
    data = _as_data(data)
    _check_query(codebook, data)
    _, distances = _nearest(data, codebook.centroids.astype(_np.float64))
    return _math.fsum(distances)
