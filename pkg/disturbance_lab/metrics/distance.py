"""
Distance from a trajectory to a reference attractor.

    d = (1/K) Σᵢ minⱼ ‖x(iΔt) − x₀(jΔt)‖

Nearest neighbours come from a uniform cell grid over the reference points.
Queries sharing a cell are answered together; the searched cube of cells is
doubled until the best candidate is provably nearer than anything outside
it, so the result equals an exhaustive search.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from disturbance_lab.exceptions import DimensionError
from dynamics.forcing import zero
from dynamics.integrate import DEFAULT_DT, integrate_forced
from dynamics.series import TimeSeries
from dynamics.systems import SystemDefinition

logger = logging.getLogger(__name__)

DEFAULT_CELLS = 100
# Upper bound on query×candidate distance entries evaluated at once
_BLOCK_ENTRIES = 1 << 22
# Slack in cell units so rounding in cell assignment never breaks exactness
_CELL_MARGIN = 1e-6


def _distance_matrix(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Euclidean distances (len(queries), len(points)), summed channel by channel."""
    diff = queries[:, 0, None] - points[None, :, 0]
    total = diff * diff
    for j in range(1, queries.shape[1]):
        diff = queries[:, j, None] - points[None, :, j]
        total = total + diff * diff
    return np.sqrt(total)


def brute_force_nearest(queries, points) -> Tuple[np.ndarray, np.ndarray]:
    """Exhaustive nearest-neighbour search, one query at a time."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    distances = np.empty(len(queries))
    indices = np.empty(len(queries), dtype=np.int64)
    for i, q in enumerate(queries):
        row = _distance_matrix(q[None, :], points)[0]
        indices[i] = int(np.argmin(row))
        distances[i] = row[indices[i]]
    return distances, indices


class GridIndex:
    """Uniform cell grid over a point cloud; cell edge = bounding-box diagonal / ``cells``."""

    def __init__(self, points, cells: int = DEFAULT_CELLS):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[0] < 1:
            raise DimensionError("Cannot index an empty point set")
        if not np.all(np.isfinite(points)):
            raise DimensionError("Reference points must be finite")
        self.dimension = points.shape[1]
        self.origin = points.min(axis=0)
        diagonal = float(np.linalg.norm(points.max(axis=0) - self.origin))
        self.cell_size = diagonal / cells if diagonal > 0 else 1.0
        keys = self.cell_of(points)
        order = np.argsort(keys[:, 0], kind='stable')
        self._order = order
        self._points = points[order]
        self._keys = keys[order]
        self._x_keys = np.ascontiguousarray(self._keys[:, 0])

    def __len__(self) -> int:
        return self._points.shape[0]

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        return np.floor((points - self.origin) / self.cell_size).astype(np.int64)

    def _cube(self, cell: np.ndarray, reach: int) -> np.ndarray:
        """Positions of indexed points whose cell lies within ``reach`` cells of ``cell``."""
        lo = np.searchsorted(self._x_keys, cell[0] - reach, side='left')
        hi = np.searchsorted(self._x_keys, cell[0] + reach, side='right')
        block = self._keys[lo:hi, 1:]
        inside = np.all(np.abs(block - cell[1:]) <= reach, axis=1)
        return np.arange(lo, hi)[inside]

    def query(self, queries) -> Tuple[np.ndarray, np.ndarray]:
        """Exact nearest reference point for every query: (distances, indices)."""
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        if queries.shape[1] != self.dimension:
            raise DimensionError(f"Queries have {queries.shape[1]} channels, index has {self.dimension}")
        distances = np.empty(len(queries))
        indices = np.empty(len(queries), dtype=np.int64)
        cells = self.cell_of(queries)
        groups, inverse = np.unique(cells, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        by_group = np.argsort(inverse, kind='stable')
        bounds = np.concatenate([[0], np.cumsum(np.bincount(inverse, minlength=len(groups)))])

        for g, cell in enumerate(groups):
            pending = by_group[bounds[g]:bounds[g + 1]]
            reach = 1
            while pending.size:
                candidates = self._cube(cell, reach)
                complete = candidates.size == len(self)
                if candidates.size:
                    radius = (reach - _CELL_MARGIN) * self.cell_size
                    step = max(1, _BLOCK_ENTRIES // candidates.size)
                    unresolved = []
                    for start in range(0, pending.size, step):
                        chunk = pending[start:start + step]
                        matrix = _distance_matrix(queries[chunk], self._points[candidates])
                        nearest = np.argmin(matrix, axis=1)
                        best = matrix[np.arange(chunk.size), nearest]
                        done = np.full(chunk.size, complete) | (best <= radius)
                        distances[chunk[done]] = best[done]
                        indices[chunk[done]] = self._order[candidates[nearest[done]]]
                        unresolved.append(chunk[~done])
                    pending = np.concatenate(unresolved)
                reach *= 2
        return distances, indices


@dataclass
class AttractorReference:
    """Undisturbed reference trajectory with a lazily built spatial index."""

    points: TimeSeries
    cells: int = DEFAULT_CELLS
    _index: Optional[GridIndex] = field(default=None, init=False, repr=False)

    @property
    def index(self) -> GridIndex:
        if self._index is None:
            self._index = GridIndex(self.points.samples, self.cells)
        return self._index


def build_reference(system: SystemDefinition, dt: float = DEFAULT_DT, duration: float = 150.0,
                    transient: float = 50.0, x0: Sequence[float] = (1.0, 1.0, 1.0),
                    cells: int = DEFAULT_CELLS) -> AttractorReference:
    """Integrate ``system`` with no forcing and keep the post-transient samples."""
    run = integrate_forced(system, zero(system.dimension), x0, dt=dt, duration=duration, transient=transient)
    logger.info(f"Built {system.name} reference attractor with {len(run.states)} points")
    return AttractorReference(run.states, cells)


def attractor_distance(trajectory: TimeSeries, reference: AttractorReference) -> float:
    """Mean Euclidean distance from each trajectory point to its nearest reference point."""
    if trajectory.n_channels != reference.points.n_channels:
        raise DimensionError(
            f"Trajectory has {trajectory.n_channels} channels, reference has {reference.points.n_channels}"
        )
    distances, _ = reference.index.query(trajectory.samples)
    return float(distances.mean())
