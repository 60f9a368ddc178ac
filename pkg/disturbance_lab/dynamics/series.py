"""
Uniformly sampled multichannel time series and their CSV form.

CSV layout: header row of channel labels, first column ``t`` (time), one
row per sample, floats written with 17 significant digits.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from disturbance_lab.exceptions import DimensionError, GridValidationError, SeriesMismatchError

logger = logging.getLogger(__name__)

TIME_COLUMN = 't'
FLOAT_FORMAT = '%.17g'
GRID_JITTER = 1e-9
STATE_LABELS = ('x', 'y', 'z')


def default_labels(count: int, prefix: str = '') -> Tuple[str, ...]:
    """('x', 'y', 'z') style labels for up to three channels, indexed beyond."""
    if count <= len(STATE_LABELS):
        base = STATE_LABELS[:count]
    else:
        base = tuple(f"c{i}" for i in range(count))
    return tuple(f"{prefix}{label}" for label in base)


@dataclass(frozen=True)
class TimeSeries:
    dt: float
    samples: np.ndarray
    labels: Tuple[str, ...] = field(default=())
    start_time: float = 0.0

    def __post_init__(self):
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise GridValidationError(f"Timestep must be positive and finite, got {self.dt}")
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise DimensionError(f"A time series needs at least one sample, got shape {samples.shape}")
        samples.setflags(write=False)
        object.__setattr__(self, 'samples', samples)
        labels = tuple(self.labels) or default_labels(samples.shape[1])
        if len(labels) != samples.shape[1]:
            raise DimensionError(f"{len(labels)} labels for {samples.shape[1]} channels")
        object.__setattr__(self, 'labels', labels)
        object.__setattr__(self, 'dt', float(self.dt))
        object.__setattr__(self, 'start_time', float(self.start_time))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_channels(self) -> int:
        return self.samples.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.start_time + self.dt * np.arange(len(self))

    @property
    def end_time(self) -> float:
        return self.start_time + self.dt * (len(self) - 1)

    def channel(self, label: str) -> np.ndarray:
        try:
            return self.samples[:, self.labels.index(label)]
        except ValueError:
            raise GridValidationError(f"Missing channel {label!r}; available: {', '.join(self.labels)}")

    def select(self, labels: Iterable[str]) -> 'TimeSeries':
        labels = tuple(labels)
        columns = np.column_stack([self.channel(label) for label in labels])
        return TimeSeries(self.dt, columns, labels, self.start_time)

    def columns(self, indices: Sequence[int], labels: Sequence[str] = None) -> 'TimeSeries':
        indices = list(indices)
        names = tuple(labels) if labels is not None else tuple(self.labels[i] for i in indices)
        return TimeSeries(self.dt, self.samples[:, indices], names, self.start_time)

    def relabel(self, labels: Sequence[str]) -> 'TimeSeries':
        return TimeSeries(self.dt, self.samples, tuple(labels), self.start_time)

    def slice(self, start: int = 0, stop: int = None) -> 'TimeSeries':
        stop = len(self) if stop is None else stop
        if not (0 <= start < stop <= len(self)):
            raise SeriesMismatchError(f"Invalid slice [{start}, {stop}) of a {len(self)}-sample series")
        return TimeSeries(self.dt, self.samples[start:stop], self.labels, self.start_time + start * self.dt)

    def same_grid(self, other: 'TimeSeries') -> bool:
        return (
            len(self) == len(other)
            and abs(self.dt - other.dt) <= GRID_JITTER * self.dt
            and abs(self.start_time - other.start_time) <= GRID_JITTER * max(self.dt, abs(self.start_time))
        )

    def require_same_grid(self, other: 'TimeSeries', what: str = 'series') -> None:
        if not self.same_grid(other):
            raise SeriesMismatchError(
                f"{what} do not share a grid: {len(self)} samples from t={self.start_time:g} (dt={self.dt:g}) "
                f"vs {len(other)} samples from t={other.start_time:g} (dt={other.dt:g})"
            )

    @classmethod
    def hstack(cls, *series: 'TimeSeries') -> 'TimeSeries':
        first = series[0]
        for other in series[1:]:
            first.require_same_grid(other, 'stacked series')
        samples = np.column_stack([s.samples for s in series])
        labels = tuple(label for s in series for label in s.labels)
        return cls(first.dt, samples, labels, first.start_time)

    # CSV

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.samples, columns=list(self.labels))
        frame.insert(0, TIME_COLUMN, self.times)
        return frame

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
        return path

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, channels: Sequence[str] = None) -> 'TimeSeries':
        if TIME_COLUMN not in frame.columns:
            raise GridValidationError(f"Missing time column {TIME_COLUMN!r}")
        if len(frame) < 2:
            raise GridValidationError("At least two rows are needed to infer the timestep")
        labels = [c for c in frame.columns if c != TIME_COLUMN] if channels is None else list(channels)
        missing = [c for c in labels if c not in frame.columns]
        if missing:
            raise GridValidationError(f"Missing channels: {', '.join(missing)}")
        try:
            times = frame[TIME_COLUMN].to_numpy(dtype=float)
            values = frame[labels].to_numpy(dtype=float)
        except (TypeError, ValueError) as exc:
            raise GridValidationError(f"Non-numeric data: {exc}") from exc
        if not np.all(np.isfinite(times)):
            raise GridValidationError("Time column contains non-finite values")
        dt = (times[-1] - times[0]) / (len(times) - 1)
        if not dt > 0:
            raise GridValidationError("Time column must be strictly increasing")
        jitter = np.max(np.abs(np.diff(times) - dt))
        if jitter > GRID_JITTER * dt:
            raise GridValidationError(
                f"Series is not uniformly sampled: step jitter {jitter:.3g} exceeds {GRID_JITTER:g} of dt={dt:.6g}"
            )
        return cls(dt, values, tuple(labels), times[0])

    @classmethod
    def read_csv(cls, path: Union[str, Path], channels: Sequence[str] = None) -> 'TimeSeries':
        path = Path(path)
        try:
            frame = pd.read_csv(path)
        except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
            raise GridValidationError(f"Cannot read {path}: {exc}") from exc
        series = cls.from_frame(frame, channels)
        logger.info(f"Loaded {path.name}: {len(series)} samples, dt={series.dt:.6g}, channels={','.join(series.labels)}")
        return series
