"""Fixed-step explicit Euler integration of forced systems."""
import logging
from dataclasses import dataclass

import numpy as np

from disturbance_lab.exceptions import ConfigurationError, DimensionError, DivergenceError
from .forcing import ForcingSignal
from .series import TimeSeries, default_labels
from .systems import SystemDefinition

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.002


def step_count(duration: float, dt: float) -> int:
    """Number of Euler steps covering ``duration``; at least one."""
    if not dt > 0:
        raise ConfigurationError(f"Timestep must be positive, got {dt}")
    steps = int(round(duration / dt))
    if steps < 1:
        raise ConfigurationError(f"Duration {duration} is shorter than one timestep {dt}")
    return steps


def transient_steps(transient: float, dt: float) -> int:
    if transient < 0:
        raise ConfigurationError(f"Transient must be non-negative, got {transient}")
    return int(round(transient / dt))


@dataclass(frozen=True)
class ForcedRun:
    """States x(t_k) and the forcing f(t_k) applied on the same grid."""

    states: TimeSeries
    forcing: TimeSeries


def integrate_forced(
    system: SystemDefinition,
    forcing: ForcingSignal,
    x0,
    dt: float = DEFAULT_DT,
    duration: float = 150.0,
    transient: float = 0.0,
) -> ForcedRun:
    """
    Euler trajectory x(t+Δt) = x(t) + Δt·[F(x(t)) + f(t)] from t = 0.

    The first ``transient`` time units are integrated but not recorded; the
    record holds round(duration/dt) + 1 samples starting at t = transient.
    A non-finite state raises ``DivergenceError`` with the step index.
    """
    x = np.array(x0, dtype=float)
    if x.shape != (system.dimension,):
        raise DimensionError(f"Initial state must have {system.dimension} components, got shape {x.shape}")
    if forcing.dimension != system.dimension:
        raise DimensionError(f"Forcing dimension {forcing.dimension} != system dimension {system.dimension}")
    recorded = step_count(duration, dt)
    skip = transient_steps(transient, dt)
    total = skip + recorded
    applied = forcing.sample(dt * np.arange(total + 1))

    states = np.empty((recorded + 1, system.dimension))
    drift = system.drift
    for k in range(total + 1):
        if k >= skip:
            states[k - skip] = x
        if k == total:
            break
        x = x + dt * (drift(x) + applied[k])
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"{system.name} trajectory diverged at step {k + 1}", step=k + 1, last_iterate=x)

    logger.debug(f"Integrated {system.name} for {total} steps (recorded {recorded + 1} samples)")
    start = skip * dt
    return ForcedRun(
        states=TimeSeries(dt, states, default_labels(system.dimension), start),
        forcing=TimeSeries(dt, applied[skip:], default_labels(system.dimension, 'f_'), start),
    )
