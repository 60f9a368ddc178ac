import numpy as np

from disturbance_lab.exceptions import ConfigurationError
from dynamics.series import TimeSeries


def window_samples(window: float, dt: float) -> int:
    """⌊window/dt⌋ forced odd."""
    width = int(np.floor(window / dt + 1e-9))
    if width < 1:
        raise ConfigurationError(f"Moving-average window {window} is shorter than the timestep {dt}")
    return width if width % 2 else width + 1


def moving_average(series: TimeSeries, window: float) -> TimeSeries:
    """
    Centered moving average over ``window`` time units. Near the ends the
    window shrinks symmetrically, so the first and last samples are kept.
    """
    width = window_samples(window, series.dt)
    if width == 1:
        return series
    half = width // 2
    K = len(series)
    index = np.arange(K)
    reach = np.minimum(half, np.minimum(index, K - 1 - index))
    sums = np.vstack([np.zeros((1, series.n_channels)), np.cumsum(series.samples, axis=0)])
    averaged = (sums[index + reach + 1] - sums[index - reach]) / (2 * reach + 1)[:, None]
    return TimeSeries(series.dt, averaged, series.labels, series.start_time)
