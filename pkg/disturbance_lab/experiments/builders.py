"""Forcing signals from the ``training.*`` and ``disturbance.*`` config sections."""
import logging
from typing import Dict, List

from disturbance_lab.exceptions import ConfigurationError
from dynamics import forcing
from dynamics.forcing import ForcingKind, ForcingSignal
from dynamics.series import TimeSeries
from .config import ExperimentConfig

logger = logging.getLogger(__name__)

DEFAULT_OU_INTENSITY = 1.25
DEFAULT_ROSSLER_SCALE = 0.1


def _number(section: Dict[str, str], name: str, owner: str, default: float = None) -> float:
    raw = section.get(name, '')
    if raw == '':
        if default is None:
            raise ConfigurationError(f"{owner}.{name} is required")
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"{owner}.{name} must be a number, got {raw!r}")


def _vector(section: Dict[str, str], name: str, owner: str, default: List[float] = None) -> List[float]:
    raw = section.get(name, '')
    if raw == '':
        if default is None:
            raise ConfigurationError(f"{owner}.{name} is required")
        return list(default)
    try:
        return [float(part) for part in raw.split(',')]
    except ValueError:
        raise ConfigurationError(f"{owner}.{name} must be comma-separated numbers, got {raw!r}")


def _levels(section: Dict[str, str], owner: str) -> List[List[float]]:
    raw = section.get('levels', '')
    if not raw:
        raise ConfigurationError(f"{owner}.levels is required (vectors separated by ';')")
    try:
        return [[float(v) for v in level.split(',')] for level in raw.split(';') if level.strip()]
    except ValueError:
        raise ConfigurationError(f"{owner}.levels must look like '1,1;-1,1;...', got {raw!r}")


def build_forcing(cfg: ExperimentConfig, owner: str, dimension: int, seed: int) -> ForcingSignal:
    """
    Forcing described by section ``owner`` over the whole integration span
    (transient plus recorded duration) on the simulation grid.
    """
    section = cfg.section(owner)
    kind = section['kind']
    active = tuple(int(v) for v in _vector(section, 'active', owner, [0, 1]))
    dt = cfg.dt
    span = cfg.transient + cfg.duration
    common = {'dimension': dimension, 'active': active}

    if kind == ForcingKind.SINUSOID_PAIR:
        signal = forcing.sinusoid_pair(_number(section, 'omega', owner, forcing.DEFAULT_OMEGA),
                                       _number(section, 'amplitude', owner, 1.0), **common)
    elif kind == ForcingKind.OFFSET_COSINES:
        signal = forcing.offset_cosines(_number(section, 'omega', owner, forcing.DEFAULT_OMEGA),
                                        _number(section, 'offset', owner, 1.0),
                                        _number(section, 'amplitude', owner, 1.0), **common)
    elif kind == ForcingKind.SQUARE_PAIR:
        signal = forcing.square_pair(_number(section, 'omega', owner, forcing.DEFAULT_OMEGA),
                                     _number(section, 'amplitude', owner, 1.0), **common)
    elif kind == ForcingKind.PIECEWISE_CONSTANT:
        signal = forcing.piecewise_constant(_levels(section, owner), _number(section, 'hold', owner), **common)
    elif kind == ForcingKind.CONSTANT:
        signal = forcing.constant(_vector(section, 'values', owner), **common)
    elif kind == ForcingKind.PULSE:
        signal = forcing.pulse(_vector(section, 'amplitude', owner, [1.0]), _number(section, 'center', owner),
                               _number(section, 'width', owner), **common)
    elif kind == ForcingKind.DRIFT:
        signal = forcing.drift(_vector(section, 'amplitude', owner, [1.0]), _number(section, 'timescale', owner),
                               _number(section, 'center', owner, 0.0), **common)
    elif kind == ForcingKind.ZERO:
        signal = forcing.zero(dimension)
    elif kind == ForcingKind.ROSSLER_SCALED:
        signal = forcing.rossler_scaled(
            dt, span,
            scale=_number(section, 'scale', owner, DEFAULT_ROSSLER_SCALE),
            a=_number(section, 'a', owner, 0.2),
            b=_number(section, 'b', owner, 0.2),
            c=_number(section, 'c', owner, 5.7),
            x0=_vector(section, 'x0', owner, [1.0, 1.0, 1.0]),
            transient=_number(section, 'transient', owner, 50.0),
            **common,
        )
    elif kind == ForcingKind.ORNSTEIN_UHLENBECK:
        signal = forcing.ornstein_uhlenbeck(
            _number(section, 'D', owner, DEFAULT_OU_INTENSITY), dt, span, seed,
            theta=_number(section, 'theta', owner, 0.5),
            x0=_number(section, 'x0', owner, 0.0),
            **common,
        )
    elif kind == ForcingKind.EXTERNAL_SERIES:
        path = section.get('path', '')
        if not path:
            raise ConfigurationError(f"{owner}.path is required for external-series forcing")
        signal = forcing.external_series(TimeSeries.read_csv(path), **common)
    else:
        raise ConfigurationError(f"Unsupported {owner}.kind {kind!r}")
    logger.debug(f"Built {owner} forcing {kind} on components {signal.active}")
    return signal
