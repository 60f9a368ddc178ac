"""
Ridge regression for linear readouts.

W_out minimizes Σ‖f − W_out r‖² + λ Tr(W_out W_outᵀ) and is obtained from
the normal equations W_out (RRᵀ + λI) = FRᵀ with a Cholesky solve. The
Gram matrices can be accumulated block by block so the full state history
never has to be held in memory.
"""
import logging

import numpy as np
from scipy import linalg

from disturbance_lab.exceptions import ConfigurationError, DimensionError, NumericalError, RegularizationRequiredError

logger = logging.getLogger(__name__)


def ridge_from_gram(gram: np.ndarray, cross: np.ndarray, lam: float) -> np.ndarray:
    """Solve W (gram + λI) = cross for W (N_out×M)."""
    gram = np.asarray(gram, dtype=float)
    cross = np.asarray(cross, dtype=float)
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise DimensionError(f"Gram matrix must be square, got {gram.shape}")
    if cross.ndim != 2 or cross.shape[1] != gram.shape[0]:
        raise DimensionError(f"Cross matrix must be N_out×{gram.shape[0]}, got {cross.shape}")
    if lam < 0:
        raise ConfigurationError(f"Ridge penalty must be non-negative, got {lam}")

    normal = gram + lam * np.eye(gram.shape[0]) if lam > 0 else gram
    try:
        factor = linalg.cho_factor(normal, lower=False, check_finite=True)
        solution = linalg.cho_solve(factor, cross.T, check_finite=False)
    except linalg.LinAlgError as exc:
        if lam == 0:
            raise RegularizationRequiredError(
                "Normal matrix is singular; a positive ridge penalty is required",
                last_iterate=normal,
            ) from exc
        raise NumericalError(f"Ridge solve failed: {exc}", last_iterate=normal) from exc
    return solution.T


def ridge_solve(states: np.ndarray, targets: np.ndarray, lam: float) -> np.ndarray:
    """
    Readout W_out (N_out×M) from states (M×K) and targets (N_out×K).

    Computes W_out = F Rᵀ (R Rᵀ + λI)⁻¹.
    """
    states = np.asarray(states, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if states.ndim != 2 or targets.ndim != 2:
        raise DimensionError("States and targets must be 2-D arrays")
    if states.shape[1] != targets.shape[1]:
        raise DimensionError(
            f"States and targets must share the sample axis: {states.shape[1]} != {targets.shape[1]}"
        )
    if states.shape[1] < 1:
        raise DimensionError("At least one sample is required")
    if not np.all(np.isfinite(states)):
        raise NumericalError("States contain non-finite values")
    return ridge_from_gram(states @ states.T, targets @ states.T, lam)


class GramAccumulator:
    """
    Streaming sufficient statistics for ridge regression.

    Holds RRᵀ, FRᵀ and per-channel target sums so that both the readout and
    its in-sample error can be computed without the state history.
    """

    def __init__(self, state_dim: int, target_dim: int):
        self.state_dim = int(state_dim)
        self.target_dim = int(target_dim)
        self.gram = np.zeros((self.state_dim, self.state_dim))
        self.cross = np.zeros((self.target_dim, self.state_dim))
        self.target_sum = np.zeros(self.target_dim)
        self.target_sq_sum = np.zeros(self.target_dim)
        self.samples = 0

    def update(self, states: np.ndarray, targets: np.ndarray) -> None:
        """Add a block of samples: states (M×K), targets (N_out×K)."""
        states = np.asarray(states, dtype=float)
        targets = np.asarray(targets, dtype=float)
        if states.shape[0] != self.state_dim or targets.shape[0] != self.target_dim:
            raise DimensionError(
                f"Expected blocks of {self.state_dim} states and {self.target_dim} targets, "
                f"got {states.shape[0]} and {targets.shape[0]}"
            )
        if states.shape[1] != targets.shape[1]:
            raise DimensionError("State and target blocks must have the same number of samples")
        if not np.all(np.isfinite(states)):
            raise NumericalError("States contain non-finite values")
        self.gram += states @ states.T
        self.cross += targets @ states.T
        self.target_sum += targets.sum(axis=1)
        self.target_sq_sum += np.einsum('ik,ik->i', targets, targets)
        self.samples += states.shape[1]

    def merge(self, other: 'GramAccumulator') -> 'GramAccumulator':
        if (other.state_dim, other.target_dim) != (self.state_dim, self.target_dim):
            raise DimensionError("Cannot merge accumulators of different dimensions")
        merged = GramAccumulator(self.state_dim, self.target_dim)
        merged.gram = self.gram + other.gram
        merged.cross = self.cross + other.cross
        merged.target_sum = self.target_sum + other.target_sum
        merged.target_sq_sum = self.target_sq_sum + other.target_sq_sum
        merged.samples = self.samples + other.samples
        return merged

    def solve(self, lam: float) -> np.ndarray:
        if self.samples < 1:
            raise DimensionError("No samples accumulated")
        return ridge_from_gram(self.gram, self.cross, lam)

    def nrmse(self, readout: np.ndarray) -> np.ndarray:
        """Per-channel in-sample NRMSE of ``readout``; NaN for constant targets."""
        W = np.asarray(readout, dtype=float)
        K = self.samples
        sse = (
            self.target_sq_sum
            - 2.0 * np.einsum('im,im->i', W, self.cross)
            + np.einsum('im,mn,in->i', W, self.gram, W)
        )
        mse = np.maximum(sse, 0.0) / K
        mean = self.target_sum / K
        variance = self.target_sq_sum / K - mean ** 2
        out = np.full(self.target_dim, np.nan)
        defined = variance > 0
        out[defined] = np.sqrt(mse[defined] / variance[defined])
        return out

    def cost(self, readout: np.ndarray, lam: float) -> float:
        """Value of the ridge objective for ``readout``."""
        W = np.asarray(readout, dtype=float)
        sse = (
            self.target_sq_sum.sum()
            - 2.0 * np.einsum('im,im->', W, self.cross)
            + np.einsum('im,mn,in->', W, self.gram, W)
        )
        return float(sse + lam * np.sum(W * W))
