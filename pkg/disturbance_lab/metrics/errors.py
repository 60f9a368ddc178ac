import logging

import numpy as np

from disturbance_lab.exceptions import ConfigurationError, DimensionError, UndefinedMetricError
from dynamics.series import TimeSeries

logger = logging.getLogger(__name__)

DEFAULT_DISCARD = 2500


def nrmse(estimate: TimeSeries, truth: TimeSeries, discard: int = DEFAULT_DISCARD, strict: bool = False) -> np.ndarray:
    """
    Per-channel RMS error over the samples after ``discard``, divided by the
    (population) standard deviation of the truth on the same samples.

    A zero-variance truth channel is undefined: NaN with a warning, or
    ``UndefinedMetricError`` when ``strict``.
    """
    truth.require_same_grid(estimate, 'estimate and truth')
    if estimate.n_channels != truth.n_channels:
        raise DimensionError(f"Estimate has {estimate.n_channels} channels, truth has {truth.n_channels}")
    if not 0 <= discard < len(truth):
        raise ConfigurationError(f"Discard {discard} must leave samples out of {len(truth)}")

    error = estimate.samples[discard:] - truth.samples[discard:]
    rms = np.sqrt(np.mean(error ** 2, axis=0))
    scale = truth.samples[discard:].std(axis=0)
    result = np.full(truth.n_channels, np.nan)
    defined = scale > 0
    result[defined] = rms[defined] / scale[defined]
    if not np.all(defined):
        undefined = [truth.labels[i] for i in np.flatnonzero(~defined)]
        if strict:
            raise UndefinedMetricError(f"NRMSE undefined for zero-variance channels {undefined}")
        logger.warning(f"NRMSE undefined for zero-variance channels {undefined}")
    return result
