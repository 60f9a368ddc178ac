"""
Echo-state reservoir with a ridge-trained linear readout.

    r(t+Δt) = tanh[A r(t) + W_in x(t) + 1],    u(t) = W_out r(t)

The readout is fitted so that u reproduces the known training forcing f
from observations of the forced system; afterwards u estimates an unknown
disturbance g from observations of the disturbed system.
"""
import copy
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from disturbance_lab.exceptions import ConfigurationError, DimensionError, UntrainedReadoutError
from dynamics.series import TimeSeries, default_labels
from linalg_core.matrices import random_sparse, rescale_to_radius, spectral_radius
from linalg_core.ridge import GramAccumulator
from linalg_core.seeding import STREAM_INPUT, STREAM_RESERVOIR, derive_seed, make_rng, validate_seed

logger = logging.getLogger(__name__)

# States buffered per Gram update during training
TRAINING_CHUNK = 1000


@dataclass(frozen=True)
class ReservoirConfig:
    M: int = 1000
    density: Optional[float] = None
    entry_range: float = 0.5
    spectral_radius: float = 1.2
    input_scale: float = 0.01
    ridge_lambda: float = 1e-6
    input_dim: int = 3
    output_channels: Tuple[int, ...] = (0, 1)
    washout_steps: int = 2500
    seed: int = 0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ConfigurationError(f"Reservoir size must be a positive integer, got {self.M}")
        object.__setattr__(self, 'M', int(self.M))
        if self.density is None:
            object.__setattr__(self, 'density', min(1.0, 6.0 / self.M))
        if not (0.0 < self.density <= 1.0):
            raise ConfigurationError(f"Reservoir density must lie in (0, 1], got {self.density}")
        if self.entry_range < 0 or self.input_scale < 0:
            raise ConfigurationError("Entry range and input scale must be non-negative")
        if not self.spectral_radius > 0:
            raise ConfigurationError(f"Target spectral radius must be positive, got {self.spectral_radius}")
        if self.ridge_lambda < 0:
            raise ConfigurationError(f"Ridge penalty must be non-negative, got {self.ridge_lambda}")
        if self.input_dim < 1:
            raise ConfigurationError(f"Input dimension must be positive, got {self.input_dim}")
        channels = tuple(int(c) for c in self.output_channels)
        if not channels or len(set(channels)) != len(channels) or any(c < 0 or c >= self.input_dim for c in channels):
            raise ConfigurationError(f"Output channels {channels} invalid for input dimension {self.input_dim}")
        object.__setattr__(self, 'output_channels', channels)
        if self.washout_steps < 0:
            raise ConfigurationError(f"Washout must be non-negative, got {self.washout_steps}")
        object.__setattr__(self, 'seed', validate_seed(self.seed))

    @property
    def output_dim(self) -> int:
        return len(self.output_channels)

    def to_dict(self) -> dict:
        data = asdict(self)
        data['output_channels'] = list(self.output_channels)
        return data


@dataclass
class TrainingReport:
    nrmse: np.ndarray
    samples: int
    washout: int
    readout_norm: float = field(default=0.0)


class Reservoir:
    """
    A built reservoir: A, W_in, the readout W_out (None until trained) and
    the internal state r. Mutable during ``step``/``infer``; use ``clone``
    to hand independent copies to parallel workers.
    """

    def __init__(self, config: ReservoirConfig, A, W_in: np.ndarray, W_out: Optional[np.ndarray] = None,
                 r: Optional[np.ndarray] = None):
        self.config = config
        self.A = A.tocsr()
        self.W_in = np.asarray(W_in, dtype=float)
        if self.A.shape != (config.M, config.M):
            raise DimensionError(f"A must be {config.M}x{config.M}, got {self.A.shape}")
        if self.W_in.shape != (config.M, config.input_dim):
            raise DimensionError(f"W_in must be {config.M}x{config.input_dim}, got {self.W_in.shape}")
        self.W_out = None if W_out is None else np.asarray(W_out, dtype=float)
        if self.W_out is not None and self.W_out.shape != (config.output_dim, config.M):
            raise DimensionError(f"W_out must be {config.output_dim}x{config.M}, got {self.W_out.shape}")
        self.r = np.zeros(config.M) if r is None else np.array(r, dtype=float)
        self.training_report: Optional[TrainingReport] = None

    def __repr__(self):
        status = 'trained' if self.is_trained else 'untrained'
        return f"<Reservoir M={self.config.M} nnz={self.A.nnz} {status}>"

    @property
    def is_trained(self) -> bool:
        return self.W_out is not None

    @property
    def output_channels(self) -> Tuple[int, ...]:
        return self.config.output_channels

    def reset(self) -> None:
        self.r = np.zeros(self.config.M)

    def clone(self) -> 'Reservoir':
        return copy.deepcopy(self)

    def _check_input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.config.input_dim,):
            raise DimensionError(f"Reservoir expects {self.config.input_dim} inputs, got shape {x.shape}")
        return x

    def step(self, x) -> np.ndarray:
        """r ← tanh(A r + W_in x + 1); returns the new state."""
        x = self._check_input(x)
        self.r = np.tanh(self.A @ self.r + self.W_in @ x + 1.0)
        return self.r

    def infer(self, x) -> np.ndarray:
        """Advance with ``x`` and return u = W_out r (streaming)."""
        if self.W_out is None:
            raise UntrainedReadoutError("Reservoir readout has not been trained")
        return self.W_out @ self.step(x)

    def expand_output(self, u: np.ndarray) -> np.ndarray:
        """Embed an output_dim estimate into the full input dimension (zeros elsewhere)."""
        full = np.zeros(self.config.input_dim)
        full[list(self.output_channels)] = u
        return full

    def train(self, observations: TimeSeries, forcing: TimeSeries, washout: Optional[int] = None) -> TrainingReport:
        """
        Fit W_out so that W_out r(t) ≈ f(t) on the retained window.

        The reservoir is reset, driven with every observation, and the state
        that has just absorbed x(t) is paired with f(t). The first
        ``washout`` states are discarded. ``forcing`` holds the targets,
        either output_dim channels or the full state dimension (then the
        output channels are selected).
        """
        washout = self.config.washout_steps if washout is None else int(washout)
        observations.require_same_grid(forcing, 'observations and forcing')
        targets = forcing.samples
        if targets.shape[1] == self.config.input_dim and targets.shape[1] != self.config.output_dim:
            targets = targets[:, list(self.output_channels)]
        if targets.shape[1] != self.config.output_dim:
            raise DimensionError(f"Forcing has {forcing.n_channels} channels, readout produces {self.config.output_dim}")
        if washout >= len(observations):
            raise ConfigurationError(f"Washout {washout} leaves no samples out of {len(observations)}")
        retained = len(observations) - washout
        if retained < self.config.M:
            logger.warning(f"Only {retained} training samples for a reservoir of size {self.config.M}")

        accumulator = GramAccumulator(self.config.M, self.config.output_dim)
        buffer = np.empty((TRAINING_CHUNK, self.config.M))
        filled = 0
        start = 0
        self.reset()
        for k, x in enumerate(observations.samples):
            self.step(x)
            if k < washout:
                continue
            if filled == 0:
                start = k
            buffer[filled] = self.r
            filled += 1
            if filled == TRAINING_CHUNK:
                accumulator.update(buffer.T, targets[start:start + filled].T)
                filled = 0
        if filled:
            accumulator.update(buffer[:filled].T, targets[start:start + filled].T)

        self.W_out = accumulator.solve(self.config.ridge_lambda)
        report = TrainingReport(
            nrmse=accumulator.nrmse(self.W_out),
            samples=accumulator.samples,
            washout=washout,
            readout_norm=float(np.linalg.norm(self.W_out)),
        )
        self.training_report = report
        logger.info(
            f"Trained readout on {report.samples} samples (washout {washout}); "
            f"NRMSE per channel: {np.array2string(report.nrmse, precision=4)}"
        )
        return report

    def predict_series(self, observations: TimeSeries, reset: bool = True) -> TimeSeries:
        """Stream ``observations`` through the reservoir; returns u on the same grid."""
        if self.W_out is None:
            raise UntrainedReadoutError("Reservoir readout has not been trained")
        if reset:
            self.reset()
        out = np.empty((len(observations), self.config.output_dim))
        for k, x in enumerate(observations.samples):
            out[k] = self.infer(x)
        full = default_labels(self.config.input_dim, 'u_')
        labels = tuple(full[c] for c in self.output_channels)
        return TimeSeries(observations.dt, out, labels, observations.start_time)


def build(config: ReservoirConfig) -> Reservoir:
    """
    Random reservoir for ``config``: sparse A rescaled to the target
    spectral radius, dense uniform W_in, r = 0, untrained readout.
    """
    A = random_sparse(config.M, config.density, -config.entry_range, config.entry_range,
                      seed=derive_seed(config.seed, STREAM_RESERVOIR))
    radius = spectral_radius(A)
    A = rescale_to_radius(A, config.spectral_radius, radius=radius)
    rng = make_rng(derive_seed(config.seed, STREAM_INPUT))
    W_in = rng.uniform(-config.input_scale, config.input_scale, size=(config.M, config.input_dim))
    logger.info(
        f"Built reservoir M={config.M} nnz={A.nnz} (raw radius {radius:.6g} -> {config.spectral_radius}), seed={config.seed}"
    )
    return Reservoir(config, A, W_in)
