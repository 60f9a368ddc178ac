"""Intrinsic dynamics F(x) of the test systems."""
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Dict, Mapping

import numpy as np

from disturbance_lab.exceptions import ConfigurationError, DimensionError

LORENZ_DEFAULTS = {'sigma': 10.0, 'rho': 28.0, 'beta': 8.0 / 3.0}
ROSSLER_DEFAULTS = {'a': 0.2, 'b': 0.2, 'c': 5.7}


def _as_state(state, dimension: int) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape != (dimension,):
        raise DimensionError(f"Expected a {dimension}-dimensional state, got shape {state.shape}")
    return state


def lorenz_drift(state, sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> np.ndarray:
    x, y, z = _as_state(state, 3)
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


def rossler_drift(state, a: float = 0.2, b: float = 0.2, c: float = 5.7) -> np.ndarray:
    x, y, z = _as_state(state, 3)
    return np.array([-y - z, x + a * y, b + z * (x - c)])


def rossler_step(state, dt: float, a: float = 0.2, b: float = 0.2, c: float = 5.7) -> np.ndarray:
    """One explicit Euler step of the Rössler flow."""
    if dt < 0:
        raise ConfigurationError(f"Timestep must be non-negative, got {dt}")
    state = _as_state(state, 3)
    return state + dt * rossler_drift(state, a, b, c)


def lorenz_fixed_point(rho: float = 28.0, beta: float = 8.0 / 3.0) -> np.ndarray:
    """The nontrivial fixed point (√(β(ρ−1)), √(β(ρ−1)), ρ−1)."""
    q = np.sqrt(beta * (rho - 1.0))
    return np.array([q, q, rho - 1.0])


def _null_drift(state, dimension: int) -> np.ndarray:
    return np.zeros_like(_as_state(state, dimension))


def _linear_drift(state, rate: float, dimension: int) -> np.ndarray:
    return -rate * _as_state(state, dimension)


@dataclass(frozen=True)
class SystemDefinition:
    name: str
    dimension: int
    drift: Callable[[np.ndarray], np.ndarray]
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __call__(self, state) -> np.ndarray:
        return self.drift(state)


def lorenz_system(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> SystemDefinition:
    params = {'sigma': float(sigma), 'rho': float(rho), 'beta': float(beta)}
    return SystemDefinition('lorenz', 3, partial(lorenz_drift, **params), params)


def rossler_system(a: float = 0.2, b: float = 0.2, c: float = 5.7) -> SystemDefinition:
    params = {'a': float(a), 'b': float(b), 'c': float(c)}
    return SystemDefinition('rossler', 3, partial(rossler_drift, **params), params)


def null_system(dimension: int = 3) -> SystemDefinition:
    """F ≡ 0: the state only integrates the forcing."""
    return SystemDefinition('null', dimension, partial(_null_drift, dimension=dimension), {})


def linear_decay_system(rate: float = 1.0, dimension: int = 1) -> SystemDefinition:
    """F(x) = −rate·x."""
    return SystemDefinition('linear', dimension, partial(_linear_drift, rate=float(rate), dimension=dimension), {'rate': float(rate)})


SYSTEMS: Dict[str, Callable[..., SystemDefinition]] = {
    'lorenz': lorenz_system,
    'rossler': rossler_system,
    'null': null_system,
    'linear': linear_decay_system,
}


def get_system(name: str, **parameters) -> SystemDefinition:
    try:
        factory = SYSTEMS[name]
    except KeyError:
        raise ConfigurationError(f"Unknown system {name!r}; choose one of {', '.join(SYSTEMS)}")
    try:
        return factory(**parameters)
    except TypeError as exc:
        raise ConfigurationError(f"Invalid parameters for system {name!r}: {exc}") from exc
