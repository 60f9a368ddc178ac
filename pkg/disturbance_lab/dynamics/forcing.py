"""
Additive forcing signals: training functions f(t) and disturbances g(t).

A ``ForcingSignal`` yields an N-vector at time t that is exactly zero
outside its active components. Deterministic kinds are closed-form functions
of t; the Rössler, Ornstein-Uhlenbeck and external kinds are precomputed
``TimeSeries`` on the simulation grid and evaluated by sample index, with
linear interpolation only off the grid.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence, Tuple

import numpy as np
from django.db import models

from disturbance_lab.exceptions import ConfigurationError, DimensionError, HorizonError
from linalg_core.seeding import derive_seed, make_rng
from .series import GRID_JITTER, TimeSeries
from .systems import ROSSLER_DEFAULTS, rossler_step

logger = logging.getLogger(__name__)

DEFAULT_OMEGA = 0.05


class ForcingKind(models.TextChoices):
    SINUSOID_PAIR = 'sinusoid-pair', 'Sinusoid pair [cos ωt, sin ωt]'
    OFFSET_COSINES = 'offset-cosines', 'Offset cosines [cos ωt, cos ω(t − δ)]'
    SQUARE_PAIR = 'square-pair', 'Square waves [sign cos ωt, sign sin ωt]'
    PIECEWISE_CONSTANT = 'piecewise-constant', 'Cycle of constant levels'
    CONSTANT = 'constant', 'Constant vector'
    PULSE = 'pulse', 'Temporally localized pulse'
    DRIFT = 'drift', 'Slowly varying ramp'
    ROSSLER_SCALED = 'rossler-scaled', 'Scaled Rössler coordinates'
    ORNSTEIN_UHLENBECK = 'ornstein-uhlenbeck', 'Ornstein-Uhlenbeck process'
    ZERO = 'zero', 'No forcing'
    EXTERNAL_SERIES = 'external-series', 'Ingested time series'


SAMPLED_KINDS = {ForcingKind.ROSSLER_SCALED, ForcingKind.ORNSTEIN_UHLENBECK, ForcingKind.EXTERNAL_SERIES}
PAIR_KINDS = {ForcingKind.SINUSOID_PAIR, ForcingKind.OFFSET_COSINES, ForcingKind.SQUARE_PAIR}


@dataclass(frozen=True)
class ForcingSignal:
    kind: str
    dimension: int = 3
    active: Tuple[int, ...] = (0, 1)
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    series: Optional[TimeSeries] = None

    def __post_init__(self):
        if self.kind not in ForcingKind.values:
            raise ConfigurationError(f"Unknown forcing kind {self.kind!r}; choose one of {', '.join(ForcingKind.values)}")
        object.__setattr__(self, 'kind', ForcingKind(self.kind).value)
        active = tuple(int(i) for i in self.active)
        if len(set(active)) != len(active) or any(i < 0 or i >= self.dimension for i in active):
            raise ConfigurationError(f"Active components {active} invalid for dimension {self.dimension}")
        object.__setattr__(self, 'active', active)
        if self.kind in PAIR_KINDS and len(active) != 2:
            raise ConfigurationError(f"{self.kind} forcing drives exactly two components, got {active}")
        if self.kind in SAMPLED_KINDS:
            if self.series is None:
                raise ConfigurationError(f"{self.kind} forcing needs a precomputed series")
            if self.series.n_channels != len(active):
                raise DimensionError(f"Series has {self.series.n_channels} channels for {len(active)} active components")

    @property
    def horizon(self) -> Optional[Tuple[float, float]]:
        if self.series is None:
            return None
        return self.series.start_time, self.series.end_time

    def __call__(self, t: float) -> np.ndarray:
        return eval_forcing(self, t)

    def sample(self, times) -> np.ndarray:
        """Forcing at each of ``times`` as a (K, dimension) array."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((times.size, self.dimension))
        if self.kind != ForcingKind.ZERO and self.active:
            out[:, list(self.active)] = _active_values(self, times)
        return out


def _param(signal: ForcingSignal, name: str, default=None):
    value = signal.params.get(name, default)
    if value is None:
        raise ConfigurationError(f"{signal.kind} forcing requires parameter {name!r}")
    return value


def _vector_param(signal: ForcingSignal, name: str, default=None) -> np.ndarray:
    value = np.atleast_1d(np.asarray(_param(signal, name, default), dtype=float))
    if value.size == 1:
        value = np.repeat(value, len(signal.active))
    if value.shape != (len(signal.active),):
        raise ConfigurationError(f"{signal.kind} parameter {name!r} needs {len(signal.active)} values")
    return value


def _sampled_values(series: TimeSeries, times: np.ndarray) -> np.ndarray:
    position = (times - series.start_time) / series.dt
    last = len(series) - 1
    slack = GRID_JITTER * np.maximum(1.0, np.abs(position))
    outside = (position < -slack) | (position > last + slack)
    if np.any(outside):
        bad = times[outside][0]
        raise HorizonError(
            f"t={bad:g} is outside the signal horizon [{series.start_time:g}, {series.end_time:g}]"
        )
    nearest = np.clip(np.rint(position), 0, last).astype(np.int64)
    on_grid = np.abs(position - nearest) <= slack
    values = np.empty((times.size, series.n_channels))
    values[on_grid] = series.samples[nearest[on_grid]]
    if not np.all(on_grid):
        grid = series.times
        off = ~on_grid
        for channel in range(series.n_channels):
            values[off, channel] = np.interp(times[off], grid, series.samples[:, channel])
    return values


def _active_values(signal: ForcingSignal, t: np.ndarray) -> np.ndarray:
    kind = signal.kind
    if kind in PAIR_KINDS:
        amplitude = float(signal.params.get('amplitude', 1.0))
        omega = float(signal.params.get('omega', DEFAULT_OMEGA))
    if kind == ForcingKind.SINUSOID_PAIR:
        return amplitude * np.column_stack([np.cos(omega * t), np.sin(omega * t)])
    if kind == ForcingKind.OFFSET_COSINES:
        offset = float(signal.params.get('offset', 1.0))
        return amplitude * np.column_stack([np.cos(omega * t), np.cos(omega * (t - offset))])
    if kind == ForcingKind.SQUARE_PAIR:
        return amplitude * np.column_stack([np.sign(np.cos(omega * t)), np.sign(np.sin(omega * t))])
    if kind == ForcingKind.PIECEWISE_CONSTANT:
        levels = np.asarray(_param(signal, 'levels'), dtype=float)
        if levels.ndim != 2 or levels.shape[1] != len(signal.active) or levels.shape[0] < 1:
            raise ConfigurationError(f"piecewise-constant levels must be a list of {len(signal.active)}-vectors")
        hold = float(_param(signal, 'hold'))
        if hold <= 0:
            raise ConfigurationError(f"piecewise-constant hold must be positive, got {hold}")
        index = np.floor(t / hold).astype(np.int64) % levels.shape[0]
        return levels[index]
    if kind == ForcingKind.CONSTANT:
        return np.tile(_vector_param(signal, 'values'), (t.size, 1))
    if kind == ForcingKind.PULSE:
        peak = _vector_param(signal, 'amplitude', 1.0)
        center = float(_param(signal, 'center'))
        width = float(_param(signal, 'width'))
        envelope = np.exp(-0.5 * ((t - center) / width) ** 2)
        return envelope[:, None] * peak[None, :]
    if kind == ForcingKind.DRIFT:
        peak = _vector_param(signal, 'amplitude', 1.0)
        center = float(signal.params.get('center', 0.0))
        timescale = float(_param(signal, 'timescale'))
        return np.tanh((t - center) / timescale)[:, None] * peak[None, :]
    if kind in SAMPLED_KINDS:
        return _sampled_values(signal.series, t)
    return np.zeros((t.size, len(signal.active)))


def eval_forcing(signal: ForcingSignal, t: float) -> np.ndarray:
    """The N-vector forcing at time ``t``."""
    return signal.sample([t])[0]


# Builders


def sinusoid_pair(omega: float = DEFAULT_OMEGA, amplitude: float = 1.0, dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.SINUSOID_PAIR, dimension, tuple(active), {'omega': omega, 'amplitude': amplitude})


def offset_cosines(omega: float = DEFAULT_OMEGA, offset: float = 1.0, amplitude: float = 1.0,
                   dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.OFFSET_COSINES, dimension, tuple(active),
                         {'omega': omega, 'offset': offset, 'amplitude': amplitude})


def square_pair(omega: float = DEFAULT_OMEGA, amplitude: float = 1.0, dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.SQUARE_PAIR, dimension, tuple(active), {'omega': omega, 'amplitude': amplitude})


def piecewise_constant(levels: Sequence[Sequence[float]], hold: float, dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.PIECEWISE_CONSTANT, dimension, tuple(active),
                         {'levels': [list(map(float, level)) for level in levels], 'hold': hold})


def constant(values: Sequence[float], dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.CONSTANT, dimension, tuple(active), {'values': list(map(float, values))})


def pulse(amplitude, center: float, width: float, dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.PULSE, dimension, tuple(active),
                         {'amplitude': amplitude, 'center': center, 'width': width})


def drift(amplitude, timescale: float, center: float = 0.0, dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.DRIFT, dimension, tuple(active),
                         {'amplitude': amplitude, 'timescale': timescale, 'center': center})


def zero(dimension: int = 3) -> ForcingSignal:
    return ForcingSignal(ForcingKind.ZERO, dimension, ())


def ou_path(n_steps: int, dt: float, D: float, seed, x0: float = 0.0, theta: float = 0.5,
            start_time: float = 0.0) -> TimeSeries:
    """
    Euler-Maruyama path of dX = −θX dt + η dt with ⟨η(t)η(t′)⟩ = 2Dδ(t − t′).

    η is drawn per step from Normal(0, 2D/dt); the path has n_steps + 1
    samples starting at x0.
    """
    if dt <= 0:
        raise ConfigurationError(f"Timestep must be positive, got {dt}")
    if D < 0:
        raise ConfigurationError(f"Noise intensity must be non-negative, got {D}")
    n_steps = int(n_steps)
    eta = make_rng(seed).standard_normal(n_steps) * np.sqrt(2.0 * D / dt)
    path = np.empty(n_steps + 1)
    value = float(x0)
    path[0] = value
    for k in range(n_steps):
        value = value + dt * (-theta * value + eta[k])
        path[k + 1] = value
    return TimeSeries(dt, path, ('X',), start_time)


def ornstein_uhlenbeck(D: float, dt: float, duration: float, seed, theta: float = 0.5, x0: float = 0.0,
                       dimension: int = 3, active=(0, 1), start_time: float = 0.0) -> ForcingSignal:
    """Independent OU processes on each active component, one sub-seed per component."""
    n_steps = int(round(duration / dt))
    paths = [
        ou_path(n_steps, dt, D, derive_seed(seed, index), x0=x0, theta=theta, start_time=start_time).samples[:, 0]
        for index in range(len(active))
    ]
    series = TimeSeries(dt, np.column_stack(paths), tuple(f"ou_{i}" for i in active), start_time)
    return ForcingSignal(ForcingKind.ORNSTEIN_UHLENBECK, dimension, tuple(active),
                         {'D': D, 'theta': theta, 'x0': x0}, seed=seed, series=series)


def rossler_path(n_steps: int, dt: float, a: float = 0.2, b: float = 0.2, c: float = 5.7,
                 x0=(1.0, 1.0, 1.0), transient: float = 50.0, start_time: float = 0.0) -> TimeSeries:
    """Euler trajectory of the Rössler flow after discarding ``transient`` time units."""
    state = np.asarray(x0, dtype=float)
    for _ in range(int(round(transient / dt))):
        state = rossler_step(state, dt, a, b, c)
    path = np.empty((int(n_steps) + 1, 3))
    path[0] = state
    for k in range(int(n_steps)):
        state = rossler_step(state, dt, a, b, c)
        path[k + 1] = state
    return TimeSeries(dt, path, ('x_R', 'y_R', 'z_R'), start_time)


def rossler_scaled(dt: float, duration: float, scale: float = 0.1, a: float = ROSSLER_DEFAULTS['a'],
                   b: float = ROSSLER_DEFAULTS['b'], c: float = ROSSLER_DEFAULTS['c'], x0=(1.0, 1.0, 1.0),
                   transient: float = 50.0, dimension: int = 3, active=(0, 1), start_time: float = 0.0) -> ForcingSignal:
    """[scale·x_R, scale·y_R] on the active components (0.1 for identification, 24 for suppression)."""
    active = tuple(active)
    if len(active) > 3:
        raise ConfigurationError("rossler-scaled forcing drives at most three components")
    path = rossler_path(int(round(duration / dt)), dt, a, b, c, x0, transient, start_time)
    series = TimeSeries(dt, scale * path.samples[:, :len(active)], path.labels[:len(active)], start_time)
    return ForcingSignal(ForcingKind.ROSSLER_SCALED, dimension, active,
                         {'scale': scale, 'a': a, 'b': b, 'c': c, 'transient': transient}, series=series)


def external_series(series: TimeSeries, dimension: int = 3, active=(0, 1)) -> ForcingSignal:
    return ForcingSignal(ForcingKind.EXTERNAL_SERIES, dimension, tuple(active), {}, series=series)
