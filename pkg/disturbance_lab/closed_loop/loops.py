"""
Closed-loop suppression of an additive disturbance.

The disturbed system is integrated with the reservoir estimate fed back:

    simple:   x(t+Δt) = x + Δt·[F(x) + g(t) − α u(t)]
    delayed:  v(t+Δt) = v + (Δt/τ)(u − v)
              x(t+Δt) = x + Δt·[F(x) + g(t) − α v(t)]

Per step the estimate u is inferred from the current x, then v is updated,
then x is advanced with the pre-update v. The readout is frozen.

A run is flagged unstable when the state leaves the divergence threshold or
the fed-back forcing α‖c‖ outgrows the disturbance it should cancel: over the
last ``instability_window`` time units its mean exceeds
``feedback_ratio_limit`` times the mean ‖g‖ on the controlled channels.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Tuple

import numpy as np
import pandas as pd
from django.db import models

from disturbance_lab.exceptions import ConfigurationError, DimensionError, DivergenceError
from dynamics.forcing import ForcingSignal
from dynamics.integrate import DEFAULT_DT, step_count, transient_steps
from dynamics.series import FLOAT_FORMAT, TIME_COLUMN, TimeSeries, default_labels
from dynamics.systems import SystemDefinition

logger = logging.getLogger(__name__)

DEFAULT_DIVERGENCE_THRESHOLD = 1e6
# Windowed mean of α‖c‖ over mean ‖g‖ above which the loop counts as unstable
DEFAULT_FEEDBACK_RATIO_LIMIT = 10.0
DEFAULT_INSTABILITY_WINDOW = 5.0
# Lower bound on the per-step disturbance magnitude in that ratio
FEEDBACK_FLOOR = 1.0


class ControlScheme(models.TextChoices):
    SIMPLE = 'simple', 'Direct feedback of u'
    DELAYED = 'delayed', 'Feedback through the moving average v'


class Estimator(Protocol):
    output_channels: Tuple[int, ...]

    def infer(self, x) -> np.ndarray:
        ...

    def reset(self) -> None:
        ...


@dataclass(frozen=True)
class ControlLoopConfig:
    scheme: str = ControlScheme.DELAYED
    alpha: float = 10.0
    tau: float = 2.0
    dt: float = DEFAULT_DT
    duration: float = 150.0
    transient: float = 50.0
    divergence_threshold: float = DEFAULT_DIVERGENCE_THRESHOLD
    feedback_ratio_limit: float = DEFAULT_FEEDBACK_RATIO_LIMIT
    instability_window: float = DEFAULT_INSTABILITY_WINDOW
    x0: Tuple[float, ...] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.scheme not in ControlScheme.values:
            raise ConfigurationError(f"Unknown control scheme {self.scheme!r}; choose simple or delayed")
        object.__setattr__(self, 'scheme', ControlScheme(self.scheme).value)
        if not self.alpha >= 0:
            raise ConfigurationError(f"Control gain must be non-negative, got {self.alpha}")
        if not self.tau > 0:
            raise ConfigurationError(f"Delay constant must be positive, got {self.tau}")
        if self.scheme == ControlScheme.DELAYED and not self.tau / self.dt > 1.0:
            raise ConfigurationError(f"Delayed control needs tau/dt > 1, got {self.tau / self.dt:g}")
        if not self.divergence_threshold > 0:
            raise ConfigurationError("Divergence threshold must be positive")
        if not self.feedback_ratio_limit > 0:
            raise ConfigurationError(f"Feedback ratio limit must be positive, got {self.feedback_ratio_limit}")
        if not self.instability_window >= self.dt:
            raise ConfigurationError(f"Instability window must be at least one step, got {self.instability_window}")
        step_count(self.duration, self.dt)
        transient_steps(self.transient, self.dt)
        object.__setattr__(self, 'x0', tuple(float(v) for v in self.x0))

    @property
    def tau_over_dt(self) -> float:
        return self.tau / self.dt


@dataclass
class LoopRecord:
    """Recorded channels of one closed-loop run; every series shares one grid."""

    scheme: str
    alpha: float
    channels: Tuple[int, ...]
    states: TimeSeries
    estimate: TimeSeries
    disturbance: TimeSeries
    effective_forcing: TimeSeries
    filtered: Optional[TimeSeries] = None
    diverged_at: Optional[int] = None
    final_state: np.ndarray = field(default=None, repr=False)

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None

    def feedback(self) -> TimeSeries:
        """The signal actually multiplied by α: u (simple) or v (delayed)."""
        return self.filtered if self.filtered is not None else self.estimate

    def raise_for_divergence(self) -> None:
        if self.diverged:
            raise DivergenceError(
                f"{self.scheme} control with alpha={self.alpha:g} diverged at step {self.diverged_at}",
                step=self.diverged_at,
                last_iterate=self.final_state,
            )

    def suppression_ratio(self, discard: int = 0) -> float:
        """Time-averaged ‖g − α c‖ over time-averaged ‖g‖ on the controlled channels."""
        columns = list(self.channels)
        g = self.disturbance.samples[discard:, columns]
        effective = self.effective_forcing.samples[discard:, columns]
        reference = np.linalg.norm(g, axis=1).mean()
        if reference == 0:
            return float('nan')
        return float(np.linalg.norm(effective, axis=1).mean() / reference)

    def to_frame(self) -> pd.DataFrame:
        frame = self.states.to_frame()
        parts = [self.estimate]
        if self.filtered is not None:
            parts.append(self.filtered)
        parts.append(self.disturbance.columns(self.channels))
        for part in parts:
            for label, column in zip(part.labels, part.samples.T):
                frame[label] = column
        return frame

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')


def _embed(channels: Sequence[int], dimension: int) -> np.ndarray:
    """Selection matrix lifting an output-channel vector into the state space."""
    embedding = np.zeros((dimension, len(channels)))
    embedding[list(channels), np.arange(len(channels))] = 1.0
    return embedding


def run_loop(system: SystemDefinition, disturbance: ForcingSignal, estimator: Estimator,
             cfg: ControlLoopConfig, reset: bool = True) -> LoopRecord:
    """
    Integrate ``system`` under ``disturbance`` with the estimate fed back
    according to ``cfg.scheme``. Divergence (non-finite state, a component
    beyond the threshold, or runaway feedback) truncates the record and
    sets ``diverged_at``.
    """
    dimension = system.dimension
    if disturbance.dimension != dimension:
        raise DimensionError(f"Disturbance dimension {disturbance.dimension} != system dimension {dimension}")
    x = np.array(cfg.x0, dtype=float)
    if x.shape != (dimension,):
        raise DimensionError(f"Initial state must have {dimension} components, got {x.shape}")
    channels = tuple(estimator.output_channels)
    if any(c < 0 or c >= dimension for c in channels):
        raise DimensionError(f"Estimator channels {channels} outside a {dimension}-dimensional state")
    if reset:
        estimator.reset()

    delayed = cfg.scheme == ControlScheme.DELAYED
    dt = cfg.dt
    recorded = step_count(cfg.duration, dt)
    skip = transient_steps(cfg.transient, dt)
    total = skip + recorded
    applied = disturbance.sample(dt * np.arange(total + 1))
    lift = _embed(channels, dimension)
    n_out = len(channels)
    gain = dt / cfg.tau
    drift = system.drift
    window = max(1, int(round(cfg.instability_window / dt)))
    g_norms = np.concatenate([[0.0], np.cumsum(np.linalg.norm(applied[:, list(channels)], axis=1))])
    feedback_norms = np.zeros(total + 1)
    feedback_sum = 0.0

    states = np.empty((recorded + 1, dimension))
    estimate = np.empty((recorded + 1, n_out))
    filtered = np.empty((recorded + 1, n_out)) if delayed else None
    effective = np.empty((recorded + 1, dimension))
    count = 0
    v = np.zeros(n_out)
    diverged_at = None
    last = None

    for k in range(total + 1):
        u = np.asarray(estimator.infer(x), dtype=float)
        c = v if delayed else u
        feedback = cfg.alpha * c
        forcing = applied[k] - lift @ feedback
        feedback_norms[k] = np.linalg.norm(feedback)
        feedback_sum += feedback_norms[k]
        if k >= window:
            feedback_sum -= feedback_norms[k - window]
        span = min(k + 1, window)
        disturbance_sum = max(g_norms[k + 1] - g_norms[k + 1 - span], span * FEEDBACK_FLOOR)
        runaway = feedback_sum > cfg.feedback_ratio_limit * disturbance_sum
        if k >= skip:
            i = k - skip
            states[i] = x
            estimate[i] = u
            if delayed:
                filtered[i] = v
            effective[i] = forcing
            count = i + 1
        else:
            last = (k, x, u, v, forcing)
        if k == total:
            break
        if delayed:
            v = v + gain * (u - v)
        x = x + dt * (drift(x) + forcing)
        if not np.all(np.isfinite(x)) or np.abs(x).max() > cfg.divergence_threshold:
            diverged_at = k + 1
            logger.warning(f"{cfg.scheme} loop with alpha={cfg.alpha:g} diverged at step {diverged_at}")
            break
        if runaway:
            diverged_at = k + 1
            logger.warning(
                f"{cfg.scheme} loop with alpha={cfg.alpha:g} unstable at step {diverged_at}: "
                f"feedback exceeds {cfg.feedback_ratio_limit:g}x the disturbance over {window} steps"
            )
            break

    offset = skip
    if count == 0:
        # Diverged inside the transient: keep the last pre-divergence sample
        offset, x_last, u_last, v_last, forcing_last = last
        states[0], estimate[0], effective[0] = x_last, u_last, forcing_last
        if delayed:
            filtered[0] = v_last
        count = 1
    start = offset * dt

    state_labels = default_labels(dimension)
    picked = [state_labels[c] for c in channels]
    record = LoopRecord(
        scheme=cfg.scheme,
        alpha=cfg.alpha,
        channels=channels,
        states=TimeSeries(dt, states[:count], state_labels, start),
        estimate=TimeSeries(dt, estimate[:count], tuple(f"u_{label}" for label in picked), start),
        disturbance=TimeSeries(dt, applied[offset:offset + count], default_labels(dimension, 'g_'), start),
        effective_forcing=TimeSeries(dt, effective[:count], default_labels(dimension, 'e_'), start),
        filtered=TimeSeries(dt, filtered[:count], tuple(f"v_{label}" for label in picked), start) if delayed else None,
        diverged_at=diverged_at,
        final_state=x,
    )
    if diverged_at is None:
        logger.debug(f"{cfg.scheme} loop alpha={cfg.alpha:g}: {count} samples recorded")
    return record


def run_simple(system: SystemDefinition, disturbance: ForcingSignal, estimator: Estimator,
               cfg: ControlLoopConfig, reset: bool = True) -> LoopRecord:
    if cfg.scheme != ControlScheme.SIMPLE:
        raise ConfigurationError(f"run_simple needs scheme=simple, got {cfg.scheme}")
    return run_loop(system, disturbance, estimator, cfg, reset)


def run_delayed(system: SystemDefinition, disturbance: ForcingSignal, estimator: Estimator,
                cfg: ControlLoopConfig, reset: bool = True) -> LoopRecord:
    if cfg.scheme != ControlScheme.DELAYED:
        raise ConfigurationError(f"run_delayed needs scheme=delayed, got {cfg.scheme}")
    return run_loop(system, disturbance, estimator, cfg, reset)
