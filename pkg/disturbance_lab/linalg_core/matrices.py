"""
Sparse reservoir matrices and their spectral radius.

Dense matrices are plain ``numpy.ndarray``; sparse matrices are
``scipy.sparse.csr_matrix`` built from coordinate triplets.
"""
import logging
from typing import Tuple

import numpy as np
from scipy import sparse

from disturbance_lab.exceptions import ConfigurationError, DimensionError, NumericalError, ZeroRadiusError
from .seeding import STREAM_POWER_ITERATION, make_rng

logger = logging.getLogger(__name__)

DenseMatrix = np.ndarray
SparseMatrix = sparse.csr_matrix

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 10_000
# Ritz block width for subspace power iteration
DEFAULT_BLOCK = 6

# Row block size when drawing the Bernoulli mask, bounds memory for large M
_MASK_CELLS = 1 << 22


def random_sparse(M: int, density: float, low: float, high: float, seed) -> SparseMatrix:
    """
    Random M×M matrix whose entries are independently nonzero with
    probability ``density`` and uniform on [low, high] when present.
    """
    if int(M) != M or M < 1:
        raise ConfigurationError(f"Matrix size must be a positive integer, got {M}")
    M = int(M)
    if not (0.0 < density <= 1.0):
        raise ConfigurationError(f"Density must lie in (0, 1], got {density}")
    if not (np.isfinite(low) and np.isfinite(high)) or low > high:
        raise ConfigurationError(f"Invalid entry bounds [{low}, {high}]")

    rng = make_rng(seed)
    rows, cols, vals = [], [], []
    block = max(1, _MASK_CELLS // M)
    for start in range(0, M, block):
        stop = min(M, start + block)
        mask = rng.random((stop - start, M)) < density
        r, c = np.nonzero(mask)
        rows.append(r + start)
        cols.append(c)
        vals.append(rng.uniform(low, high, size=r.size))

    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    matrix = sparse.coo_matrix((vals, (rows, cols)), shape=(M, M)).tocsr()
    logger.debug(f"random_sparse: M={M} density={density:.6g} nnz={matrix.nnz}")
    return matrix


def _ritz_radius(Q: np.ndarray, AQ: np.ndarray) -> float:
    H = Q.T @ AQ
    return float(np.max(np.abs(np.linalg.eigvals(H))))


def spectral_radius(
    A,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    block: int = DEFAULT_BLOCK,
    seed: int = 0,
) -> float:
    """
    Largest eigenvalue magnitude of a square, possibly nonsymmetric matrix.

    Uses power iteration on a small orthonormal block with Rayleigh-Ritz
    extraction, so real dominant eigenvalues, complex conjugate pairs and
    ±λ ties all converge. A block mapped to exactly zero yields 0.
    Non-convergence restarts once from a fresh random block, then raises
    ``NumericalError`` carrying the last estimate.
    """
    shape = A.shape
    if len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionError(f"spectral_radius needs a square matrix, got shape {shape}")
    if tol <= 0:
        raise ConfigurationError(f"Tolerance must be positive, got {tol}")
    n = shape[0]
    k = max(1, min(block, n))
    if sparse.issparse(A):
        A = A.tocsr()
        if A.nnz == 0:
            return 0.0
    else:
        A = np.asarray(A, dtype=float)

    rng = make_rng(seed, STREAM_POWER_ITERATION)
    estimate = np.nan
    for attempt in range(2):
        Q, _ = np.linalg.qr(rng.standard_normal((n, k)))
        previous = None
        for iteration in range(max_iters):
            AQ = np.asarray(A @ Q)
            scale = np.linalg.norm(AQ)
            if scale == 0.0:
                return 0.0
            estimate = _ritz_radius(Q, AQ)
            if previous is not None and abs(estimate - previous) <= tol * max(estimate, np.finfo(float).tiny):
                logger.debug(f"spectral_radius converged to {estimate:.12g} after {iteration + 1} iterations")
                return estimate
            previous = estimate
            Q, _ = np.linalg.qr(AQ / scale)
        logger.warning(f"spectral_radius stagnated after {max_iters} iterations (attempt {attempt + 1}), estimate {estimate:.12g}")
    raise NumericalError(
        f"Power iteration did not converge within {max_iters} iterations",
        last_iterate=estimate,
    )


def rescale_to_radius(A, target: float, radius: float = None):
    """Return A × (target / ρ(A)); ``radius`` may be passed if already known."""
    if radius is None:
        radius = spectral_radius(A)
    if radius == 0.0:
        raise ZeroRadiusError("Cannot rescale a matrix with zero spectral radius", last_iterate=radius)
    factor = target / radius
    if sparse.issparse(A):
        return (A * factor).tocsr()
    return np.asarray(A, dtype=float) * factor


def to_triplets(A) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinate triplets (rows, cols, values) of a sparse matrix."""
    coo = sparse.coo_matrix(A)
    return coo.row.astype(np.int64), coo.col.astype(np.int64), coo.data.astype(float)


def from_triplets(rows, cols, values, size: int) -> SparseMatrix:
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= size or cols.max() >= size):
        raise DimensionError(f"Triplet indices out of range for a {size}x{size} matrix")
    if rows.size and np.unique(rows * size + cols).size != rows.size:
        raise DimensionError("Duplicate (row, col) pairs in triplets")
    return sparse.coo_matrix((np.asarray(values, dtype=float), (rows, cols)), shape=(size, size)).tocsr()
