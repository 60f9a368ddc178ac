"""
Experiment runners: each takes a resolved ``ExperimentConfig`` and writes
its artifacts into one output directory.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import pandas as pd
from django.conf import settings
from joblib import Parallel, delayed

from closed_loop.loops import ControlLoopConfig, LoopRecord, run_loop
from closed_loop.stability import surrogate_stability
from disturbance_lab.exceptions import ConfigurationError, DimensionError, DivergenceError
from dynamics.forcing import ForcingSignal
from dynamics.integrate import integrate_forced
from dynamics.series import TimeSeries, default_labels
from dynamics.systems import SystemDefinition
from metrics.coverage import coverage_ratio
from metrics.distance import AttractorReference, attractor_distance, build_reference
from metrics.errors import nrmse
from metrics.filters import moving_average
from metrics.sweep import SweepResult, suggest_gain
from reservoir.esn import Reservoir, build
from reservoir.persistence import save_reservoir
from .artifacts import RunArtifacts, read_manifest, record_run, sha256_of
from .builders import build_forcing
from .config import Experiment, ExperimentConfig

logger = logging.getLogger(__name__)

SUCCEEDED = 'SUCCEEDED'
DIVERGED = 'DIVERGED'


@dataclass
class RunResult:
    experiment: str
    directory: Path
    status: str
    summary: Dict
    manifest: Path


@dataclass
class ReplayReport:
    directory: Path
    matches: Dict[str, bool] = field(default_factory=dict)

    @property
    def reproduced(self) -> bool:
        return bool(self.matches) and all(self.matches.values())


def _labelled(values, labels) -> Dict[str, Optional[float]]:
    return {label: float(v) for label, v in zip(labels, values)}


def _finish(cfg: ExperimentConfig, artifacts: RunArtifacts, status: str, summary: Dict) -> RunResult:
    artifacts.write_json('summary.json', summary)
    manifest = artifacts.finalize(cfg, status, summary)
    record_run(cfg, status, artifacts.directory, summary, manifest)
    return RunResult(cfg.experiment, artifacts.directory, status, summary, manifest)


def _pair_frame(truth: TimeSeries, estimate: TimeSeries) -> pd.DataFrame:
    frame = truth.to_frame()
    for label, column in zip(estimate.labels, estimate.samples.T):
        frame[label] = column
    return frame


def train_on(cfg: ExperimentConfig, observations: TimeSeries, forcing: TimeSeries,
             artifacts: RunArtifacts) -> Tuple[Reservoir, Dict]:
    reservoir = build(cfg.reservoir_config(input_dim=observations.n_channels))
    report = reservoir.train(observations, forcing)
    if cfg.flag('output.save_reservoir'):
        save_reservoir(reservoir, artifacts.path('reservoir.npz'))
        artifacts.register('reservoir.npz')
    labels = [f"f_{observations.labels[c]}" for c in reservoir.output_channels]
    return reservoir, {
        'training_nrmse': _labelled(report.nrmse, labels),
        'training_samples': report.samples,
        'washout': report.washout,
    }


def train_simulated(cfg: ExperimentConfig, system: SystemDefinition, artifacts: RunArtifacts) -> Tuple[Reservoir, Dict, TimeSeries]:
    """Drive ``system`` with the training forcing and fit the readout; returns the forcing record too."""
    seeds = cfg.seeds()
    training = build_forcing(cfg, 'training', system.dimension, seeds['training'])
    run = integrate_forced(system, training, cfg.x0, dt=cfg.dt, duration=cfg.duration, transient=cfg.transient)
    artifacts.write_series('training_observations.csv', run.states)
    artifacts.write_series('training_forcing.csv', run.forcing)
    reservoir, summary = train_on(cfg, run.states, run.forcing, artifacts)
    return reservoir, summary, run.forcing


def run_identify(cfg: ExperimentConfig, out: Union[str, Path, None] = None) -> RunResult:
    artifacts = RunArtifacts(out or cfg.output_dir())
    system = cfg.system()
    reservoir, summary, training_forcing = train_simulated(cfg, system, artifacts)

    disturbance = build_forcing(cfg, 'disturbance', system.dimension, cfg.seeds()['disturbance'])
    disturbed = integrate_forced(system, disturbance, cfg.x0, dt=cfg.dt, duration=cfg.duration, transient=cfg.transient)
    artifacts.write_series('disturbed_observations.csv', disturbed.states)
    recorded = disturbed.forcing.relabel(default_labels(system.dimension, 'g_'))
    artifacts.write_series('disturbance.csv', recorded)

    channels = reservoir.output_channels
    estimate = reservoir.predict_series(disturbed.states)
    truth = recorded.columns(channels)
    artifacts.write_frame('identification.csv', _pair_frame(truth, estimate))
    scores = nrmse(estimate, truth, discard=cfg.integer('metrics.nrmse_discard'))

    summary['nrmse'] = _labelled(scores, truth.labels)
    summary['coverage'] = None
    if len(channels) == 2:
        report = coverage_ratio(training_forcing.columns(channels), truth,
                                min_aspect=cfg.number('metrics.min_aspect'))
        summary['coverage'] = report.as_dict()
    logger.info(f"Identification NRMSE {summary['nrmse']}")
    return _finish(cfg, artifacts, SUCCEEDED, summary)


def _reference(cfg: ExperimentConfig, system: SystemDefinition) -> AttractorReference:
    reference = build_reference(system, dt=cfg.dt, duration=cfg.duration, transient=cfg.transient,
                                x0=cfg.x0, cells=cfg.integer('metrics.reference_cells'))
    # Index once here so sweep workers receive it prebuilt
    reference.index
    return reference


def run_suppress(cfg: ExperimentConfig, out: Union[str, Path, None] = None) -> RunResult:
    """
    Train, then run the configured control loop. A diverged loop still
    writes its truncated record and manifest before ``DivergenceError``.
    """
    artifacts = RunArtifacts(out or cfg.output_dir())
    system = cfg.system()
    reservoir, summary, _ = train_simulated(cfg, system, artifacts)
    disturbance = build_forcing(cfg, 'disturbance', system.dimension, cfg.seeds()['disturbance'])
    loop_cfg = cfg.loop_config()

    record = run_loop(system, disturbance, reservoir.clone(), loop_cfg)
    record.to_csv(artifacts.path(f"control_{loop_cfg.scheme}.csv"))
    artifacts.register(f"control_{loop_cfg.scheme}.csv")

    summary.update({
        'scheme': loop_cfg.scheme,
        'alpha': loop_cfg.alpha,
        'tau_over_dt': loop_cfg.tau_over_dt,
        'diverged_at': record.diverged_at,
        'suppression_ratio': record.suppression_ratio(),
        'distance': None,
    })
    if loop_cfg.scheme == 'delayed':
        summary['surrogate'] = surrogate_stability(loop_cfg.alpha, loop_cfg.tau_over_dt).value
    if record.diverged:
        result = _finish(cfg, artifacts, DIVERGED, summary)
        logger.error(f"Control loop diverged at step {record.diverged_at}; artifacts in {result.directory}")
        record.raise_for_divergence()

    reference = _reference(cfg, system)
    artifacts.write_series('reference.csv', reference.points)
    summary['distance'] = attractor_distance(record.states, reference)
    logger.info(f"{loop_cfg.scheme} control alpha={loop_cfg.alpha:g}: d={summary['distance']:.6g}")
    return _finish(cfg, artifacts, SUCCEEDED, summary)


def sweep_point(system: SystemDefinition, disturbance: ForcingSignal, reservoir: Reservoir,
                loop_cfg: ControlLoopConfig, reference: AttractorReference) -> Tuple[float, Optional[float]]:
    """d(α) for one gain; None when the loop diverges."""
    record: LoopRecord = run_loop(system, disturbance, reservoir, loop_cfg)
    if record.diverged:
        return loop_cfg.alpha, None
    return loop_cfg.alpha, attractor_distance(record.states, reference)


def run_sweep(cfg: ExperimentConfig, out: Union[str, Path, None] = None, workers: Optional[int] = None) -> RunResult:
    """d(α) for every gain in ``control.alphas`` and every scheme in ``control.schemes``."""
    artifacts = RunArtifacts(out or cfg.output_dir())
    workers = workers or settings.DISTURBANCE_LAB['SWEEP_WORKERS']
    system = cfg.system()
    reservoir, summary, _ = train_simulated(cfg, system, artifacts)
    disturbance = build_forcing(cfg, 'disturbance', system.dimension, cfg.seeds()['disturbance'])
    reference = _reference(cfg, system)
    alphas = cfg.numbers('control.alphas')

    summary['schemes'] = {}
    for scheme in cfg.schemes():
        configs = [cfg.loop_config(scheme, alpha) for alpha in alphas]
        points = Parallel(n_jobs=workers)(
            delayed(sweep_point)(system, disturbance, reservoir.clone(), loop_cfg, reference)
            for loop_cfg in configs
        )
        result = SweepResult(scheme)
        for alpha, distance in points:
            result.add(alpha, distance)
            if distance is None:
                logger.warning(f"{scheme} sweep: alpha={alpha:g} diverged")
            else:
                logger.info(f"{scheme} sweep: alpha={alpha:g} d={distance:.6g}")
        result.to_csv(artifacts.path(f"sweep_{scheme}.csv"))
        artifacts.register(f"sweep_{scheme}.csv")
        summary['schemes'][scheme] = {
            'alphas': result.alphas,
            'distances': result.distances,
            'stable': result.stable,
            'suggested_gain': suggest_gain(result, cfg.number('metrics.gain_tolerance')),
        }
    return _finish(cfg, artifacts, SUCCEEDED, summary)


def _match_truth(truth: TimeSeries, channels, input_dim: int) -> TimeSeries:
    if truth.n_channels == input_dim and truth.n_channels != len(channels):
        return truth.columns(channels)
    if truth.n_channels != len(channels):
        raise DimensionError(f"Truth has {truth.n_channels} channels, estimate has {len(channels)}")
    return truth


def run_identify_external(cfg: ExperimentConfig, out: Union[str, Path, None] = None) -> RunResult:
    """Train on recorded (observations, forcing), estimate the disturbance in a second recording."""
    artifacts = RunArtifacts(out or cfg.output_dir())
    observations = TimeSeries.read_csv(cfg.text('external.observations'))
    forcing = TimeSeries.read_csv(cfg.text('external.forcing'))
    disturbed = TimeSeries.read_csv(cfg.text('external.disturbed'))
    if disturbed.n_channels != observations.n_channels:
        raise DimensionError(
            f"Disturbed recording has {disturbed.n_channels} channels, training recording {observations.n_channels}"
        )
    reservoir, summary = train_on(cfg, observations, forcing, artifacts)

    raw = reservoir.predict_series(disturbed)
    filtered = moving_average(raw, cfg.number('external.window'))
    artifacts.write_series('estimate_raw.csv', raw)
    artifacts.write_series('estimate.csv', filtered)
    summary['window'] = cfg.number('external.window')
    summary['nrmse'] = None
    if cfg.text('external.truth'):
        truth = _match_truth(TimeSeries.read_csv(cfg.text('external.truth')), reservoir.output_channels,
                             observations.n_channels)
        scores = nrmse(filtered, truth, discard=cfg.integer('metrics.nrmse_discard'))
        summary['nrmse'] = _labelled(scores, truth.labels)
        logger.info(f"External identification NRMSE {summary['nrmse']}")
    return _finish(cfg, artifacts, SUCCEEDED, summary)


RUNNERS = {
    Experiment.IDENTIFY: run_identify,
    Experiment.SUPPRESS: run_suppress,
    Experiment.SWEEP: run_sweep,
    Experiment.IDENTIFY_EXTERNAL: run_identify_external,
}


def run_experiment(cfg: ExperimentConfig, out: Union[str, Path, None] = None) -> RunResult:
    try:
        runner = RUNNERS[Experiment(cfg.experiment)]
    except (KeyError, ValueError):
        raise ConfigurationError(f"No runner for experiment {cfg.experiment!r}")
    logger.info(f"Running {cfg.experiment} with seed {cfg.seed}")
    return runner(cfg, out)


def replay(manifest_path: Union[str, Path], out: Union[str, Path]) -> ReplayReport:
    """Re-run a manifest into ``out`` and compare every CSV checksum."""
    manifest = read_manifest(manifest_path)
    cfg = ExperimentConfig(manifest['config']).updated({'output.dir': str(out)})
    try:
        run_experiment(cfg, out)
    except DivergenceError:
        if manifest.get('status') != DIVERGED:
            raise
    report = ReplayReport(Path(out))
    for name, expected in sorted(manifest['artifacts'].items()):
        if not name.endswith('.csv'):
            continue
        path = Path(out) / name
        report.matches[name] = path.is_file() and sha256_of(path) == expected
    mismatched = [name for name, ok in report.matches.items() if not ok]
    if mismatched:
        logger.warning(f"Replay differs in {', '.join(mismatched)}")
    return report
