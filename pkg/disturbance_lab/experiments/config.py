"""
Experiment configuration: a flat KEY=VALUE document with dotted section
keys, read with python-dotenv. Every key has a default; a run is a pure
function of its resolved config.
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

from django.conf import settings
from django.db import models
from dotenv import dotenv_values

from closed_loop.loops import ControlLoopConfig, ControlScheme
from disturbance_lab.exceptions import ConfigurationError
from dynamics.forcing import ForcingKind
from dynamics.systems import SystemDefinition, get_system
from linalg_core.seeding import STREAM_DISTURBANCE, STREAM_TRAINING, derive_seed, validate_seed
from reservoir.esn import ReservoirConfig

logger = logging.getLogger(__name__)


class Experiment(models.TextChoices):
    IDENTIFY = 'identify', 'Identify a disturbance'
    SUPPRESS = 'suppress', 'Suppress a disturbance in closed loop'
    SWEEP = 'sweep', 'Sweep the control gain'
    IDENTIFY_EXTERNAL = 'identify-external', 'Identify from recorded data'


DEFAULTS: Dict[str, str] = {
    'experiment': Experiment.IDENTIFY.value,
    'seed': '0',
    'system.name': 'lorenz',
    'system.sigma': '10',
    'system.rho': '28',
    'system.beta': repr(8.0 / 3.0),
    'system.a': '0.2',
    'system.b': '0.2',
    'system.c': '5.7',
    'system.x0': '1,1,1',
    'simulation.dt': '0.002',
    'simulation.duration': '150',
    'simulation.transient': '50',
    'training.kind': ForcingKind.SINUSOID_PAIR.value,
    'disturbance.kind': ForcingKind.ROSSLER_SCALED.value,
    'reservoir.M': '1000',
    'reservoir.density': '',
    'reservoir.entry_range': '0.5',
    'reservoir.spectral_radius': '1.2',
    'reservoir.input_scale': '0.01',
    'reservoir.lambda': '1e-6',
    'reservoir.output_channels': '0,1',
    'reservoir.washout': '2500',
    'control.scheme': ControlScheme.DELAYED.value,
    'control.alpha': '10',
    'control.tau': '2.0',
    'control.alphas': '0,1,10,100',
    'control.schemes': '',
    'control.divergence_threshold': '1e6',
    'control.feedback_ratio_limit': '10',
    'control.instability_window': '5',
    'metrics.nrmse_discard': '2500',
    'metrics.reference_cells': '100',
    'metrics.min_aspect': '0.05',
    'metrics.gain_tolerance': '0.05',
    'external.observations': '',
    'external.forcing': '',
    'external.disturbed': '',
    'external.truth': '',
    'external.window': '0.02',
    'output.dir': '',
    'output.save_reservoir': 'false',
}

FORCING_SECTIONS = ('training', 'disturbance')
FORCING_KEYS = {
    'kind', 'omega', 'offset', 'amplitude', 'scale', 'D', 'theta', 'levels', 'hold', 'values',
    'center', 'width', 'timescale', 'active', 'a', 'b', 'c', 'x0', 'transient', 'path',
}
PATH_KEYS = ('external.observations', 'external.forcing', 'external.disturbed', 'external.truth')

SYSTEM_PARAMETERS = {
    'lorenz': ('sigma', 'rho', 'beta'),
    'rossler': ('a', 'b', 'c'),
    'null': (),
}

_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off', ''}
_BARE_VALUE = re.compile(r'^[\w.,;:/+\-]*$')


def known_key(key: str) -> bool:
    if key in DEFAULTS:
        return True
    section, _, name = key.partition('.')
    return section in FORCING_SECTIONS and name in FORCING_KEYS


@dataclass(frozen=True)
class ExperimentConfig:
    values: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        resolved = dict(DEFAULTS)
        for key, value in self.values.items():
            if not known_key(key):
                raise ConfigurationError(f"Unknown config key {key!r}")
            if value is None:
                raise ConfigurationError(f"Config key {key!r} has no value")
            resolved[key] = str(value).strip()
        object.__setattr__(self, 'values', dict(sorted(resolved.items())))
        self.validate()

    # Construction

    @classmethod
    def from_file(cls, path: Union[str, Path], overrides: Mapping[str, str] = None) -> 'ExperimentConfig':
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Config file {path} does not exist")
        values = dict(dotenv_values(path))
        # Relative data paths are taken relative to the config file
        for key in PATH_KEYS + tuple(f"{s}.path" for s in FORCING_SECTIONS):
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str((path.parent / values[key]).resolve())
        values.update(overrides or {})
        logger.info(f"Loaded experiment config {path}")
        return cls(values)

    def updated(self, mapping: Mapping[str, str]) -> 'ExperimentConfig':
        values = dict(self.values)
        values.update({key: str(value) for key, value in mapping.items()})
        return ExperimentConfig(values)

    def to_mapping(self) -> Dict[str, str]:
        return dict(self.values)

    def to_env(self) -> str:
        lines = []
        for key, value in self.values.items():
            if not _BARE_VALUE.match(value):
                value = "'" + value.replace("'", '') + "'"
            lines.append(f"{key}={value}")
        return '\n'.join(lines) + '\n'

    # Typed access

    def text(self, key: str) -> str:
        return self.values[key]

    def number(self, key: str) -> float:
        try:
            return float(self.values[key])
        except ValueError:
            raise ConfigurationError(f"{key} must be a number, got {self.values[key]!r}")

    def integer(self, key: str) -> int:
        try:
            return int(self.values[key])
        except ValueError:
            raise ConfigurationError(f"{key} must be an integer, got {self.values[key]!r}")

    def numbers(self, key: str) -> List[float]:
        raw = self.values[key]
        try:
            return [float(part) for part in raw.split(',') if part.strip()]
        except ValueError:
            raise ConfigurationError(f"{key} must be a comma-separated list of numbers, got {raw!r}")

    def integers(self, key: str) -> List[int]:
        raw = self.values[key]
        try:
            return [int(part) for part in raw.split(',') if part.strip()]
        except ValueError:
            raise ConfigurationError(f"{key} must be a comma-separated list of integers, got {raw!r}")

    def flag(self, key: str) -> bool:
        raw = self.values[key].lower()
        if raw in _TRUE:
            return True
        if raw in _FALSE:
            return False
        raise ConfigurationError(f"{key} must be true or false, got {self.values[key]!r}")

    def section(self, name: str) -> Dict[str, str]:
        prefix = f"{name}."
        return {key[len(prefix):]: value for key, value in self.values.items() if key.startswith(prefix)}

    # Derived settings

    @property
    def experiment(self) -> str:
        return self.values['experiment']

    @property
    def seed(self) -> int:
        return validate_seed(self.integer('seed'))

    @property
    def dt(self) -> float:
        return self.number('simulation.dt')

    @property
    def duration(self) -> float:
        return self.number('simulation.duration')

    @property
    def transient(self) -> float:
        return self.number('simulation.transient')

    @property
    def x0(self) -> Tuple[float, ...]:
        return tuple(self.numbers('system.x0'))

    def seeds(self) -> Dict[str, int]:
        return {
            'master': self.seed,
            'reservoir': self.seed,
            'training': derive_seed(self.seed, STREAM_TRAINING),
            'disturbance': derive_seed(self.seed, STREAM_DISTURBANCE),
        }

    def system(self) -> SystemDefinition:
        name = self.values['system.name']
        if name not in SYSTEM_PARAMETERS:
            raise ConfigurationError(f"system.name must be one of {', '.join(SYSTEM_PARAMETERS)}, got {name!r}")
        parameters = {p: self.number(f"system.{p}") for p in SYSTEM_PARAMETERS[name]}
        return get_system(name, **parameters)

    def reservoir_config(self, input_dim: int = 3) -> ReservoirConfig:
        density = self.values['reservoir.density']
        return ReservoirConfig(
            M=self.integer('reservoir.M'),
            density=float(density) if density else None,
            entry_range=self.number('reservoir.entry_range'),
            spectral_radius=self.number('reservoir.spectral_radius'),
            input_scale=self.number('reservoir.input_scale'),
            ridge_lambda=self.number('reservoir.lambda'),
            input_dim=input_dim,
            output_channels=tuple(self.integers('reservoir.output_channels')),
            washout_steps=self.integer('reservoir.washout'),
            seed=self.seeds()['reservoir'],
        )

    def schemes(self) -> List[str]:
        raw = self.values['control.schemes']
        schemes = [s.strip() for s in raw.split(',') if s.strip()] or [self.values['control.scheme']]
        for scheme in schemes:
            if scheme not in ControlScheme.values:
                raise ConfigurationError(f"Unknown control scheme {scheme!r} in control.schemes")
        return schemes

    def loop_config(self, scheme: Optional[str] = None, alpha: Optional[float] = None) -> ControlLoopConfig:
        return ControlLoopConfig(
            scheme=scheme or self.values['control.scheme'],
            alpha=self.number('control.alpha') if alpha is None else alpha,
            tau=self.number('control.tau'),
            dt=self.dt,
            duration=self.duration,
            transient=self.transient,
            divergence_threshold=self.number('control.divergence_threshold'),
            feedback_ratio_limit=self.number('control.feedback_ratio_limit'),
            instability_window=self.number('control.instability_window'),
            x0=self.x0,
        )

    def output_dir(self) -> Path:
        configured = self.values['output.dir']
        if configured:
            return Path(configured)
        return Path(settings.DISTURBANCE_LAB['OUTPUT_DIR']) / f"{self.experiment}_seed{self.seed}"

    def validate(self) -> None:
        """Parse every value once so bad configs fail before any work is done."""
        if self.experiment not in Experiment.values:
            raise ConfigurationError(f"experiment must be one of {', '.join(Experiment.values)}, got {self.experiment!r}")
        validate_seed(self.integer('seed'))
        if len(self.x0) != self.system().dimension:
            raise ConfigurationError(f"system.x0 needs {self.system().dimension} components")
        self.reservoir_config(input_dim=max(3, max(self.integers('reservoir.output_channels'), default=0) + 1))
        self.loop_config()
        self.schemes()
        alphas = self.numbers('control.alphas')
        if not alphas or any(a < 0 for a in alphas):
            raise ConfigurationError("control.alphas must list non-negative gains")
        for key in ('metrics.nrmse_discard', 'metrics.reference_cells'):
            if self.integer(key) < 0:
                raise ConfigurationError(f"{key} must be non-negative")
        for key in ('metrics.min_aspect', 'metrics.gain_tolerance', 'external.window'):
            self.number(key)
        self.flag('output.save_reservoir')
        for section in FORCING_SECTIONS:
            kind = self.values[f"{section}.kind"]
            if kind not in ForcingKind.values:
                raise ConfigurationError(f"{section}.kind must be one of {', '.join(ForcingKind.values)}, got {kind!r}")
        if self.experiment == Experiment.IDENTIFY_EXTERNAL:
            for key in ('external.observations', 'external.forcing', 'external.disturbed'):
                if not self.values[key]:
                    raise ConfigurationError(f"{key} is required for identify-external")
