"""
Linear stability of the surrogate feedback maps.

With an ideal one-step estimator the delayed loop reduces to the affine map

    u⁺ = g − α v,    v⁺ = v + (u − v) / n,    n = τ/Δt

whose characteristic polynomial is λ² − (1 − 1/n) λ + α/n. The simple loop
reduces to u⁺ = g − α u.
"""
import numpy as np
from django.db import models

from disturbance_lab.exceptions import ConfigurationError

DEFAULT_ITERATIONS = 10_000
# Relative distance to the fixed point that counts as converged
CONVERGENCE_FACTOR = 1e-6


class Stability(models.TextChoices):
    STABLE = 'stable', 'Stable'
    UNSTABLE = 'unstable', 'Unstable'


def _check(alpha: float, tau_over_dt: float) -> None:
    if alpha < 0:
        raise ConfigurationError(f"Control gain must be non-negative, got {alpha}")
    if not tau_over_dt > 0:
        raise ConfigurationError(f"tau/dt must be positive, got {tau_over_dt}")


def surrogate_matrix(alpha: float, tau_over_dt: float) -> np.ndarray:
    """Linear part of the delayed map acting on (u, v)."""
    _check(alpha, tau_over_dt)
    n = float(tau_over_dt)
    return np.array([[0.0, -alpha], [1.0 / n, 1.0 - 1.0 / n]])


def surrogate_spectrum(alpha: float, tau_over_dt: float) -> np.ndarray:
    """Eigenvalue moduli of the delayed map, largest first."""
    return np.sort(np.abs(np.linalg.eigvals(surrogate_matrix(alpha, tau_over_dt))))[::-1]


def surrogate_stability(alpha: float, tau_over_dt: float) -> Stability:
    """Jury criterion for λ² + a₁λ + a₀; marginal cases count as unstable."""
    _check(alpha, tau_over_dt)
    n = float(tau_over_dt)
    a1 = -(1.0 - 1.0 / n)
    a0 = alpha / n
    stable = abs(a0) < 1.0 and 1.0 + a1 + a0 > 0.0 and 1.0 - a1 + a0 > 0.0
    return Stability.STABLE if stable else Stability.UNSTABLE


def simple_surrogate_stability(alpha: float) -> Stability:
    if alpha < 0:
        raise ConfigurationError(f"Control gain must be non-negative, got {alpha}")
    return Stability.STABLE if alpha < 1.0 else Stability.UNSTABLE


def fixed_point(alpha: float, g: float = 1.0) -> float:
    return g / (1.0 + alpha)


def iterate_surrogate(alpha: float, tau_over_dt: float = None, g: float = 1.0,
                      steps: int = DEFAULT_ITERATIONS) -> np.ndarray:
    """
    Iterate the surrogate map from u = v = 0 and return the (steps + 1, 2)
    history of (u, v). Without ``tau_over_dt`` the simple map is iterated and
    v mirrors u.
    """
    if tau_over_dt is not None:
        _check(alpha, tau_over_dt)
    history = np.empty((int(steps) + 1, 2))
    u = v = 0.0
    history[0] = u, v
    with np.errstate(over='ignore', invalid='ignore'):
        for k in range(int(steps)):
            if tau_over_dt is None:
                u = g - alpha * u
                v = u
            else:
                u, v = g - alpha * v, v + (u - v) / tau_over_dt
            history[k + 1] = u, v
    return history


def iterated_stability(alpha: float, tau_over_dt: float = None, g: float = 1.0,
                       steps: int = DEFAULT_ITERATIONS) -> Stability:
    """Verdict from direct iteration: converged to g/(1+α) or not."""
    history = iterate_surrogate(alpha, tau_over_dt, g, steps)
    target = fixed_point(alpha, g)
    initial = np.abs(history[0] - target).max()
    final = np.abs(history[-1] - target).max()
    if np.isfinite(final) and final <= CONVERGENCE_FACTOR * initial:
        return Stability.STABLE
    return Stability.UNSTABLE
