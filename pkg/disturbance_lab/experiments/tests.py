import json
import math
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, TestCase, tag

from closed_loop.loops import ControlLoopConfig, run_delayed, run_simple
from disturbance_lab.exceptions import ConfigurationError, DivergenceError, GridValidationError
from dynamics.forcing import ForcingKind, constant, rossler_scaled, sinusoid_pair
from dynamics.integrate import integrate_forced
from dynamics.systems import lorenz_system
from metrics.distance import attractor_distance, build_reference
from reservoir.esn import ReservoirConfig, build
from .artifacts import read_manifest, sha256_of
from .builders import build_forcing
from .config import DEFAULTS, Experiment, ExperimentConfig
from .models import ExperimentRun
from .runners import replay, run_experiment, run_identify, run_identify_external, run_suppress, run_sweep

SMALL = {
    'reservoir.M': '40',
    'reservoir.washout': '500',
    'simulation.duration': '10',
    'simulation.transient': '5',
    'metrics.nrmse_discard': '500',
}


def small_config(**values):
    settings = dict(SMALL)
    settings.update({key.replace('__', '.'): str(value) for key, value in values.items()})
    return ExperimentConfig(settings)


class ExperimentConfigTests(SimpleTestCase):
    def test_published_defaults(self):
        cfg = ExperimentConfig()
        reservoir = cfg.reservoir_config()
        self.assertEqual(reservoir.M, 1000)
        self.assertAlmostEqual(reservoir.density, 0.006)
        self.assertEqual(reservoir.ridge_lambda, 1e-6)
        self.assertEqual(cfg.dt, 0.002)
        self.assertEqual(cfg.duration, 150.0)
        self.assertEqual(cfg.system().parameters, {'sigma': 10.0, 'rho': 28.0, 'beta': 8.0 / 3.0})
        self.assertAlmostEqual(cfg.loop_config().tau_over_dt, 1000.0)
        self.assertEqual(cfg.schemes(), ['delayed'])
        self.assertEqual(cfg.numbers('control.alphas'), [0.0, 1.0, 10.0, 100.0])

    def test_seeds_are_derived(self):
        seeds = ExperimentConfig({'seed': '7'}).seeds()
        self.assertEqual(seeds['master'], 7)
        self.assertNotEqual(seeds['training'], seeds['disturbance'])
        self.assertEqual(seeds, ExperimentConfig({'seed': '7'}).seeds())

    def test_unknown_key(self):
        with self.assertRaisesMessage(ConfigurationError, 'reservoir.size'):
            ExperimentConfig({'reservoir.size': '10'})

    def test_unparsable_value_names_the_key(self):
        with self.assertRaisesMessage(ConfigurationError, 'control.alpha'):
            ExperimentConfig({'control.alpha': 'ten'})

    def test_unknown_forcing_kind(self):
        with self.assertRaisesMessage(ConfigurationError, 'training.kind'):
            ExperimentConfig({'training.kind': 'sawtooth'})

    def test_delayed_scheme_needs_tau_above_dt(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig({'control.tau': '0.001'})

    def test_external_mode_needs_paths(self):
        with self.assertRaisesMessage(ConfigurationError, 'external.observations'):
            ExperimentConfig({'experiment': 'identify-external'})

    def test_file_with_comments_and_relative_paths(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'run.env'
            path.write_text(
                '# comment\n'
                'experiment=identify-external\n'
                'reservoir.M=50\n'
                'external.observations=data/obs.csv\n'
                'external.forcing=/abs/forcing.csv\n'
                'external.disturbed="data/dist.csv"\n'
            )
            cfg = ExperimentConfig.from_file(path, {'seed': '3'})
            self.assertEqual(cfg.integer('reservoir.M'), 50)
            self.assertEqual(cfg.seed, 3)
            self.assertEqual(Path(cfg.text('external.observations')), (Path(directory) / 'data/obs.csv').resolve())
            self.assertEqual(cfg.text('external.forcing'), '/abs/forcing.csv')

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            ExperimentConfig.from_file('/nonexistent/run.env')

    def test_resolved_env_round_trip(self):
        cfg = small_config(training__kind='piecewise-constant', training__levels='1,1;-1,1;0,-1', training__hold='2.5')
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'config.env'
            path.write_text(cfg.to_env())
            self.assertEqual(ExperimentConfig.from_file(path).to_mapping(), cfg.to_mapping())

    def test_example_configs_parse(self):
        configs = sorted((Path(__file__).resolve().parent / 'configs').glob('*.env'))
        self.assertEqual(len(configs), 7)
        for path in configs:
            ExperimentConfig.from_file(path)

    def test_external_example_reads_from_data_directory(self):
        path = Path(__file__).resolve().parent / 'configs' / 'identify_external.env'
        cfg = ExperimentConfig.from_file(path)
        self.assertEqual(Path(cfg.text('external.observations')), path.parent / 'data' / 'training_observations.csv')

    def test_instability_settings_reach_the_loop(self):
        loop = ExperimentConfig({'control.feedback_ratio_limit': '25', 'control.instability_window': '2'}).loop_config()
        self.assertEqual(loop.feedback_ratio_limit, 25.0)
        self.assertEqual(loop.instability_window, 2.0)
        with self.assertRaises(ConfigurationError):
            ExperimentConfig({'control.feedback_ratio_limit': '0'})

    def test_every_default_is_resolved(self):
        self.assertTrue(set(DEFAULTS) <= set(ExperimentConfig().to_mapping()))
        self.assertEqual(Experiment.values, ['identify', 'suppress', 'sweep', 'identify-external'])


class BuildForcingTests(SimpleTestCase):
    def test_every_generated_kind(self):
        extras = {
            'piecewise-constant': {'training.levels': '1,1;-1,0;0,-1', 'training.hold': '2'},
            'constant': {'training.values': '5,5'},
            'pulse': {'training.center': '3', 'training.width': '0.5'},
            'drift': {'training.timescale': '20'},
        }
        for kind in ForcingKind.values:
            if kind == ForcingKind.EXTERNAL_SERIES:
                continue
            settings = dict(SMALL, **{'training.kind': kind}, **extras.get(kind, {}))
            cfg = ExperimentConfig(settings)
            signal = build_forcing(cfg, 'training', 3, seed=1)
            values = signal.sample(np.array([0.0, 7.5, 15.0]))
            self.assertEqual(values.shape, (3, 3), kind)
            np.testing.assert_array_equal(values[:, 2], 0.0)

    def test_rossler_default_scale(self):
        signal = build_forcing(small_config(), 'disturbance', 3, seed=0)
        self.assertEqual(signal.kind, 'rossler-scaled')
        self.assertEqual(signal.params['scale'], 0.1)
        self.assertAlmostEqual(signal.horizon[1], 15.0)

    def test_ou_is_seeded(self):
        cfg = small_config(disturbance__kind='ornstein-uhlenbeck')
        first = build_forcing(cfg, 'disturbance', 3, seed=11).sample(np.linspace(0, 15, 50))
        second = build_forcing(cfg, 'disturbance', 3, seed=11).sample(np.linspace(0, 15, 50))
        other = build_forcing(cfg, 'disturbance', 3, seed=12).sample(np.linspace(0, 15, 50))
        np.testing.assert_array_equal(first, second)
        self.assertFalse(np.array_equal(first, other))

    def test_missing_required_parameter(self):
        with self.assertRaisesMessage(ConfigurationError, 'training.hold'):
            build_forcing(small_config(training__kind='piecewise-constant', training__levels='1,1'), 'training', 3, 0)

    def test_external_series_from_csv(self):
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'g.csv'
            pd.DataFrame({'t': 0.002 * np.arange(7501), 'a': np.ones(7501), 'b': np.zeros(7501)}).to_csv(path, index=False)
            cfg = small_config(training__kind='external-series', training__path=str(path))
            signal = build_forcing(cfg, 'training', 3, seed=0)
            np.testing.assert_allclose(signal(3.0), [1.0, 0.0, 0.0])


class RunnerTests(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)
        self.root = Path(self.directory.name)

    def test_identify_writes_artifacts_and_manifest(self):
        result = run_identify(small_config(), self.root / 'identify')
        for name in ('training_observations.csv', 'training_forcing.csv', 'disturbed_observations.csv',
                     'disturbance.csv', 'identification.csv', 'summary.json', 'config.env', 'manifest.json'):
            self.assertTrue((result.directory / name).is_file(), name)
        manifest = read_manifest(result.directory)
        self.assertEqual(manifest['experiment'], 'identify')
        for name, digest in manifest['artifacts'].items():
            self.assertEqual(sha256_of(result.directory / name), digest)
        frame = pd.read_csv(result.directory / 'identification.csv')
        self.assertEqual(list(frame.columns), ['t', 'g_x', 'g_y', 'u_x', 'u_y'])
        self.assertEqual(len(frame), 5001)
        self.assertEqual(set(result.summary['nrmse']), {'g_x', 'g_y'})
        self.assertIn('ratio', result.summary['coverage'])

        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, 'SUCCEEDED')
        self.assertEqual(run.experiment, 'identify')
        self.assertEqual(run.manifest_sha256, sha256_of(result.manifest))

    def test_replay_is_bit_identical(self):
        result = run_identify(small_config(seed=5), self.root / 'first')
        report = replay(result.manifest, self.root / 'second')
        self.assertTrue(report.reproduced)
        self.assertIn('identification.csv', report.matches)

    def test_external_round_trip_matches_in_process_run(self):
        cfg = small_config()
        identify = run_identify(cfg, self.root / 'identify')
        source = identify.directory
        external = small_config(
            experiment='identify-external',
            external__observations=source / 'training_observations.csv',
            external__forcing=source / 'training_forcing.csv',
            external__disturbed=source / 'disturbed_observations.csv',
            external__truth=source / 'disturbance.csv',
            external__window=cfg.dt,
        )
        result = run_identify_external(external, self.root / 'external')
        for label in ('g_x', 'g_y'):
            self.assertAlmostEqual(result.summary['nrmse'][label], identify.summary['nrmse'][label], delta=1e-10)
        self.assertTrue((result.directory / 'estimate.csv').is_file())

    def test_external_rejects_shuffled_rows(self):
        source = run_identify(small_config(), self.root / 'identify').directory
        shuffled = self.root / 'shuffled.csv'
        pd.read_csv(source / 'disturbed_observations.csv').sample(frac=1.0, random_state=1).to_csv(shuffled, index=False)
        external = small_config(
            experiment='identify-external',
            external__observations=source / 'training_observations.csv',
            external__forcing=source / 'training_forcing.csv',
            external__disturbed=shuffled,
        )
        with self.assertRaises(GridValidationError):
            run_identify_external(external, self.root / 'external')

    def test_suppress_divergence_keeps_artifacts(self):
        cfg = small_config(experiment='suppress', control__scheme='simple', control__alpha=0,
                           control__divergence_threshold=1)
        with self.assertRaises(DivergenceError):
            run_suppress(cfg, self.root / 'suppress')
        manifest = read_manifest(self.root / 'suppress')
        self.assertEqual(manifest['status'], 'DIVERGED')
        self.assertIn('control_simple.csv', manifest['artifacts'])
        self.assertEqual(ExperimentRun.objects.get().status, 'DIVERGED')

    def test_suppress_reports_distance(self):
        cfg = small_config(experiment='suppress', control__alpha=1)
        result = run_suppress(cfg, self.root / 'suppress')
        self.assertGreater(result.summary['distance'], 0.0)
        self.assertEqual(result.summary['surrogate'], 'stable')
        frame = pd.read_csv(result.directory / 'control_delayed.csv')
        self.assertEqual(list(frame.columns), ['t', 'x', 'y', 'z', 'u_x', 'u_y', 'v_x', 'v_y', 'g_x', 'g_y'])

    def test_sweep_schemes_coincide_at_zero_gain(self):
        cfg = small_config(experiment='sweep', control__schemes='simple,delayed', control__alphas='0,0.5')
        result = run_sweep(cfg, self.root / 'sweep')
        schemes = result.summary['schemes']
        self.assertEqual(schemes['simple']['distances'][0], schemes['delayed']['distances'][0])
        frame = pd.read_csv(result.directory / 'sweep_delayed.csv')
        self.assertEqual(list(frame.columns), ['alpha', 'distance', 'stable'])
        self.assertEqual(frame['alpha'].tolist(), [0.0, 0.5])

    def test_sweep_divergence_is_not_fatal(self):
        cfg = small_config(experiment='sweep', control__alphas='0,1', control__divergence_threshold=1)
        result = run_sweep(cfg, self.root / 'sweep')
        sweep = result.summary['schemes']['delayed']
        self.assertEqual(sweep['stable'], [False, False])
        self.assertEqual(sweep['distances'], [None, None])

    def test_sweep_is_independent_of_worker_count(self):
        cfg = small_config(experiment='sweep', control__alphas='0,2')
        serial = run_sweep(cfg, self.root / 'serial', workers=1)
        parallel = run_sweep(cfg, self.root / 'parallel', workers=2)
        self.assertEqual(sha256_of(serial.directory / 'sweep_delayed.csv'),
                         sha256_of(parallel.directory / 'sweep_delayed.csv'))

    def test_run_experiment_dispatches_on_experiment(self):
        result = run_experiment(small_config(experiment='identify'), self.root / 'dispatch')
        self.assertEqual(result.experiment, 'identify')


class CommandTests(TestCase):
    def setUp(self):
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)
        self.root = Path(self.directory.name)

    def write_config(self, **values):
        path = self.root / 'run.env'
        settings = dict(SMALL)
        settings.update({key.replace('__', '.'): str(value) for key, value in values.items()})
        path.write_text(''.join(f'{key}={value}\n' for key, value in settings.items()))
        return path

    def test_identify_command(self):
        out = StringIO()
        call_command('identify', '--config', str(self.write_config()), '--out', str(self.root / 'run'),
                     '--seed', '4', stdout=out)
        self.assertIn('identify finished', out.getvalue())
        self.assertIn('NRMSE g_x', out.getvalue())
        manifest = read_manifest(self.root / 'run')
        self.assertEqual(manifest['seeds']['master'], 4)

    def test_config_error_exit_code(self):
        with self.assertRaises(CommandError) as caught:
            call_command('identify', '--config', str(self.write_config(reservoir__size=3)), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)

    def test_divergence_exit_code(self):
        path = self.write_config(control__scheme='simple', control__alpha=0, control__divergence_threshold=1)
        with self.assertRaises(CommandError) as caught:
            call_command('suppress', '--config', str(path), '--out', str(self.root / 'run'), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 3)

    def test_replay_command(self):
        call_command('identify', '--config', str(self.write_config()), '--out', str(self.root / 'run'), stdout=StringIO())
        out = StringIO()
        call_command('replay', str(self.root / 'run'), '--out', str(self.root / 'again'), stdout=out)
        self.assertIn('Replay reproduced', out.getvalue())

    def test_missing_external_data_exit_code(self):
        path = self.root / 'external.env'
        path.write_text(
            'external.observations=data/training_observations.csv\n'
            'external.forcing=data/training_forcing.csv\n'
            'external.disturbed=data/disturbed_observations.csv\n'
        )
        with self.assertRaises(CommandError) as caught:
            call_command('identify_external', '--config', str(path), '--out', str(self.root / 'run'), stdout=StringIO())
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('training_observations.csv', str(caught.exception))

    def test_replay_needs_a_manifest(self):
        with self.assertRaises(CommandError) as caught:
            call_command('replay', str(self.root / 'missing'), '--out', str(self.root / 'again'))
        self.assertEqual(caught.exception.returncode, 2)


@tag('slow')
class FullScaleExperimentTests(TestCase):
    """Full-scale runs with the default parameters (M=1000, T=150)."""

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.directory = tempfile.TemporaryDirectory()
        cls.root = Path(cls.directory.name)
        run = integrate_forced(lorenz_system(), sinusoid_pair(), [1.0, 1.0, 1.0], duration=150.0, transient=50.0)
        cls.reservoir = build(ReservoirConfig())
        cls.reservoir.train(run.states, run.forcing)

    @classmethod
    def tearDownClass(cls):
        cls.directory.cleanup()
        super().tearDownClass()

    def test_identifies_chaotic_disturbance(self):
        result = run_identify(ExperimentConfig(), self.root / 'rossler')
        self.assertTrue(all(v < 0.2 for v in result.summary['nrmse'].values()), result.summary['nrmse'])
        self.assertTrue(all(v < 0.05 for v in result.summary['training_nrmse'].values()))

    def test_identifies_stochastic_disturbance(self):
        cfg = ExperimentConfig({'training.kind': 'square-pair', 'disturbance.kind': 'ornstein-uhlenbeck'})
        result = run_identify(cfg, self.root / 'ou')
        self.assertTrue(all(v < 0.3 for v in result.summary['nrmse'].values()), result.summary['nrmse'])

    def test_collinear_training_degrades_identification(self):
        good = run_identify(ExperimentConfig(), self.root / 'good')
        poor = run_identify(ExperimentConfig({'training.kind': 'offset-cosines'}), self.root / 'poor')
        self.assertGreater(np.mean(list(poor.summary['nrmse'].values())), np.mean(list(good.summary['nrmse'].values())))
        self.assertTrue(poor.summary['coverage']['degenerate'])
        self.assertTrue(math.isinf(poor.summary['coverage']['ratio']))
        self.assertFalse(good.summary['coverage']['degenerate'])

    def test_constant_disturbance_fixed_point(self):
        for alpha in (0.5, 1.0, 2.0):
            cfg = ControlLoopConfig(scheme='simple', alpha=alpha)
            record = run_simple(lorenz_system(), constant([5.0, 5.0]), self.reservoir.clone(), cfg)
            self.assertFalse(record.diverged, alpha)
            mean = record.estimate.samples[2500:].mean(axis=0)
            np.testing.assert_allclose(mean, [5.0 / (1.0 + alpha)] * 2, rtol=0.02, err_msg=f"alpha={alpha}")

    def test_simple_scheme_loses_stability(self):
        amplified = rossler_scaled(0.002, 200.0, scale=24.0)
        stable = run_simple(lorenz_system(), amplified, self.reservoir.clone(), ControlLoopConfig(scheme='simple', alpha=1.0))
        unstable = run_simple(lorenz_system(), amplified, self.reservoir.clone(), ControlLoopConfig(scheme='simple', alpha=5.0))
        self.assertFalse(stable.diverged)
        self.assertTrue(unstable.diverged)
        self.assertLess(len(unstable.states), len(stable.states))
        with self.assertRaises(DivergenceError):
            unstable.raise_for_divergence()

    def test_simple_sweep_improves_then_flags_instability(self):
        amplified = rossler_scaled(0.002, 200.0, scale=24.0)
        reference = build_reference(lorenz_system())
        distances = []
        for alpha in (0.0, 0.5, 1.0, 2.0):
            record = run_simple(lorenz_system(), amplified, self.reservoir.clone(),
                                ControlLoopConfig(scheme='simple', alpha=alpha))
            self.assertFalse(record.diverged, alpha)
            distances.append(attractor_distance(record.states, reference))
        self.assertTrue(all(a > b for a, b in zip(distances, distances[1:])), distances)
        unstable = run_simple(lorenz_system(), amplified, self.reservoir.clone(),
                              ControlLoopConfig(scheme='simple', alpha=5.0))
        self.assertTrue(unstable.diverged)

    def test_simple_scheme_suppression_ratio(self):
        amplified = rossler_scaled(0.002, 200.0, scale=24.0)
        record = run_simple(lorenz_system(), amplified, self.reservoir.clone(),
                            ControlLoopConfig(scheme='simple', alpha=2.0))
        self.assertFalse(record.diverged)
        self.assertLess(abs(record.suppression_ratio(discard=2500) - 1.0 / 3.0), 0.1)

    def test_delayed_sweep_approaches_the_undisturbed_attractor(self):
        amplified = rossler_scaled(0.002, 200.0, scale=24.0)
        reference = build_reference(lorenz_system())
        distances = []
        for alpha in (0.0, 1.0, 10.0, 100.0):
            record = run_delayed(lorenz_system(), amplified, self.reservoir.clone(), ControlLoopConfig(alpha=alpha))
            self.assertFalse(record.diverged, alpha)
            distances.append(attractor_distance(record.states, reference))
        self.assertTrue(all(a > b for a, b in zip(distances, distances[1:])), distances)
        self.assertLess(distances[-1] / distances[0], 0.1)

    def test_manifest_reproduces_full_run(self):
        first = run_identify(ExperimentConfig({'seed': '2'}), self.root / 'full')
        report = replay(first.manifest, self.root / 'full_again')
        self.assertTrue(report.reproduced, report.matches)
        summary = json.loads((self.root / 'full' / 'summary.json').read_text())
        self.assertEqual(summary['nrmse'], json.loads((self.root / 'full_again' / 'summary.json').read_text())['nrmse'])
