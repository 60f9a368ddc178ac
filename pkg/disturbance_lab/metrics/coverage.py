"""
Training-coverage heuristic: how far the disturbance reaches beyond the
convex hull of the training forcing in the plane of the forced components.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from disturbance_lab.exceptions import DimensionError
from dynamics.series import TimeSeries

logger = logging.getLogger(__name__)

DEFAULT_MIN_ASPECT = 0.05


@dataclass(frozen=True)
class CoverageReport:
    ratio: float
    degenerate: bool
    aspect: float
    centroid: np.ndarray
    # Hull reach before the degeneracy rule; equals ratio for a sound hull
    measured: float

    def as_dict(self) -> dict:
        return {
            'ratio': self.ratio,
            'measured': self.measured,
            'degenerate': self.degenerate,
            'aspect': self.aspect,
            'centroid': [float(v) for v in self.centroid],
        }


def _planar_points(data) -> np.ndarray:
    points = data.samples if isinstance(data, TimeSeries) else np.atleast_2d(np.asarray(data, dtype=float))
    if points.shape[1] != 2:
        raise DimensionError(f"Coverage is computed in the plane of two forced components, got {points.shape[1]}")
    return points


def aspect_ratio(points: np.ndarray) -> float:
    """Minor over major standard deviation of the point cloud."""
    eigenvalues = np.linalg.eigvalsh(np.cov(points, rowvar=False, bias=True))
    if eigenvalues[-1] <= 0:
        return 0.0
    return float(np.sqrt(max(eigenvalues[0], 0.0) / eigenvalues[-1]))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    """Area centroid of a counter-clockwise polygon."""
    x, y = vertices[:, 0], vertices[:, 1]
    x_next, y_next = np.roll(x, -1), np.roll(y, -1)
    cross = x * y_next - x_next * y
    area = cross.sum() / 2.0
    return np.array([((x + x_next) * cross).sum(), ((y + y_next) * cross).sum()]) / (6.0 * area)


def coverage_ratio(training, disturbance, min_aspect: float = DEFAULT_MIN_ASPECT) -> CoverageReport:
    """
    Smallest s such that every disturbance point lies in the training hull
    scaled by s about its centroid. A collinear or nearly collinear training
    range (aspect below ``min_aspect``) is degenerate and reports an infinite
    ratio; the reach measured against its thin hull stays in ``measured``.
    """
    train = _planar_points(training)
    target = _planar_points(disturbance)
    aspect = aspect_ratio(train)
    try:
        hull = ConvexHull(train)
    except (QhullError, ValueError) as exc:
        logger.warning(f"Training forcing spans no area, coverage undefined: {str(exc).splitlines()[0]}")
        return CoverageReport(float('inf'), True, aspect, train.mean(axis=0), float('inf'))

    centroid = polygon_centroid(train[hull.vertices])
    normals, offsets = hull.equations[:, :2], hull.equations[:, 2]
    margins = -(normals @ centroid + offsets)
    reach = (target - centroid) @ normals.T / margins
    measured = float(max(reach.max(), 0.0))
    degenerate = aspect < min_aspect
    if degenerate:
        logger.warning(f"Training forcing is nearly collinear (aspect {aspect:.3g}); hull reach {measured:.3g}")
        return CoverageReport(float('inf'), True, aspect, centroid, measured)
    return CoverageReport(measured, False, aspect, centroid, measured)
