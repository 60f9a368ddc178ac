import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase, tag
from scipy import sparse

from disturbance_lab.exceptions import (
    ConfigurationError, DimensionError, SeriesMismatchError, UntrainedReadoutError,
)
from dynamics.forcing import sinusoid_pair
from dynamics.integrate import integrate_forced
from dynamics.series import TimeSeries
from dynamics.systems import lorenz_system
from linalg_core.matrices import spectral_radius
from .esn import Reservoir, ReservoirConfig, build
from .persistence import FORMAT_VERSION, load_reservoir, save_reservoir


def toy_data(samples=200, seed=5):
    rng = np.random.default_rng(seed)
    t = 0.01 * np.arange(samples)
    observations = TimeSeries(0.01, np.column_stack([np.sin(t), np.cos(2 * t), rng.normal(size=samples)]))
    forcing = TimeSeries(0.01, np.column_stack([np.cos(t), np.sin(3 * t)]), ('f_x', 'f_y'))
    return observations, forcing


def small_config(**overrides):
    settings = dict(M=10, density=0.5, input_scale=0.5, ridge_lambda=1e-6, washout_steps=20, seed=3)
    settings.update(overrides)
    return ReservoirConfig(**settings)


class ReservoirConfigTests(SimpleTestCase):
    def test_published_defaults(self):
        config = ReservoirConfig()
        self.assertEqual(config.M, 1000)
        self.assertAlmostEqual(config.density, 0.006)
        self.assertEqual(config.spectral_radius, 1.2)
        self.assertEqual(config.input_scale, 0.01)
        self.assertEqual(config.ridge_lambda, 1e-6)
        self.assertEqual(config.output_channels, (0, 1))
        self.assertEqual(config.washout_steps, 2500)

    def test_rejects_bad_output_channels(self):
        with self.assertRaises(ConfigurationError):
            ReservoirConfig(M=10, output_channels=(0, 3))
        with self.assertRaises(ConfigurationError):
            ReservoirConfig(M=10, output_channels=(1, 1))

    def test_rejects_negative_penalty(self):
        with self.assertRaises(ConfigurationError):
            ReservoirConfig(M=10, ridge_lambda=-1.0)


class BuildTests(SimpleTestCase):
    def test_scalar_reservoir(self):
        reservoir = build(ReservoirConfig(M=1, density=1.0, output_channels=(0,), washout_steps=0))
        self.assertAlmostEqual(abs(reservoir.A.toarray()[0, 0]), 1.2, places=12)

    def test_radius_and_input_bounds(self):
        reservoir = build(ReservoirConfig(M=300, seed=11))
        dense_radius = np.abs(np.linalg.eigvals(reservoir.A.toarray())).max()
        self.assertAlmostEqual(dense_radius, 1.2, delta=1e-5)
        self.assertLessEqual(np.abs(reservoir.W_in).max(), 0.01)
        self.assertEqual(reservoir.W_in.shape, (300, 3))
        np.testing.assert_array_equal(reservoir.r, np.zeros(300))
        self.assertFalse(reservoir.is_trained)

    def test_same_seed_is_deterministic(self):
        first = build(ReservoirConfig(M=100, seed=4))
        second = build(ReservoirConfig(M=100, seed=4))
        np.testing.assert_array_equal(first.A.toarray(), second.A.toarray())
        np.testing.assert_array_equal(first.W_in, second.W_in)

    def test_different_seeds_differ(self):
        first = build(ReservoirConfig(M=100, seed=4))
        second = build(ReservoirConfig(M=100, seed=5))
        self.assertFalse(np.array_equal(first.W_in, second.W_in))


class StepTests(SimpleTestCase):
    def test_bias_only(self):
        config = ReservoirConfig(M=5, density=1.0)
        reservoir = Reservoir(config, sparse.csr_matrix((5, 5)), np.zeros((5, 3)))
        reservoir.step([3.0, -1.0, 2.0])
        np.testing.assert_allclose(reservoir.r, np.full(5, np.tanh(1.0)), rtol=0, atol=1e-15)
        self.assertAlmostEqual(reservoir.r[0], 0.76159, places=5)

    def test_zero_input_from_rest(self):
        reservoir = build(ReservoirConfig(M=50, seed=2))
        reservoir.step(np.zeros(3))
        np.testing.assert_allclose(reservoir.r, np.full(50, np.tanh(1.0)), atol=1e-15)

    def test_contracting_reservoir_reaches_fixed_point(self):
        reservoir = build(ReservoirConfig(M=10, density=1.0, spectral_radius=0.1, seed=9))
        x = np.array([0.3, -0.2, 0.5])
        previous = reservoir.r.copy()
        for _ in range(100):
            current = reservoir.step(x).copy()
            change = np.linalg.norm(current - previous)
            previous = current
        self.assertLess(change, 1e-10)

    def test_states_stay_inside_tanh_range(self):
        reservoir = build(ReservoirConfig(M=200, seed=1))
        run = integrate_forced(lorenz_system(), sinusoid_pair(), [1.0, 1.0, 1.0], duration=4.0)
        for x in run.states.samples:
            reservoir.step(x)
            self.assertTrue(np.all(np.abs(reservoir.r) < 1.0))

    def test_wrong_input_dimension(self):
        reservoir = build(ReservoirConfig(M=10))
        with self.assertRaises(DimensionError):
            reservoir.step([1.0, 2.0])


class TrainTests(SimpleTestCase):
    def collected_states(self, reservoir, observations, washout):
        reservoir.reset()
        states = []
        for x in observations.samples:
            states.append(reservoir.step(x).copy())
        return np.array(states[washout:]).T

    def test_matches_normal_equations(self):
        observations, forcing = toy_data()
        reservoir = build(small_config(ridge_lambda=1e-3))
        reservoir.train(observations, forcing)
        states = self.collected_states(build(small_config()), observations, 20)
        targets = forcing.samples[20:].T
        expected = np.linalg.solve(states @ states.T + 1e-3 * np.eye(10), states @ targets.T).T
        np.testing.assert_allclose(reservoir.W_out, expected, rtol=1e-7, atol=1e-9)

    def test_zero_forcing_gives_zero_readout(self):
        observations, forcing = toy_data()
        zeros = TimeSeries(forcing.dt, np.zeros_like(forcing.samples))
        reservoir = build(small_config())
        report = reservoir.train(observations, zeros)
        np.testing.assert_array_equal(reservoir.W_out, np.zeros((2, 10)))
        self.assertTrue(np.all(np.isnan(report.nrmse)))

    def test_full_dimension_forcing_selects_output_channels(self):
        observations, forcing = toy_data()
        full = TimeSeries(forcing.dt, np.column_stack([forcing.samples, np.zeros(len(forcing))]))
        first = build(small_config())
        first.train(observations, forcing)
        second = build(small_config())
        second.train(observations, full)
        np.testing.assert_array_equal(first.W_out, second.W_out)

    def test_replaying_training_data_reproduces_training_error(self):
        observations, forcing = toy_data(samples=600)
        reservoir = build(small_config(M=40, density=0.2))
        report = reservoir.train(observations, forcing)
        estimate = reservoir.predict_series(observations).samples[20:]
        truth = forcing.samples[20:]
        replayed = np.sqrt(np.mean((estimate - truth) ** 2, axis=0)) / truth.std(axis=0)
        np.testing.assert_allclose(replayed, report.nrmse, rtol=1e-4)
        self.assertEqual(report.samples, 580)

    def test_grid_mismatch(self):
        observations, forcing = toy_data()
        with self.assertRaises(SeriesMismatchError):
            build(small_config()).train(observations, forcing.slice(0, 150))

    def test_washout_must_leave_samples(self):
        observations, forcing = toy_data()
        with self.assertRaises(ConfigurationError):
            build(small_config()).train(observations, forcing, washout=200)

    @tag('slow')
    def test_lorenz_sinusoid_training_error(self):
        run = integrate_forced(lorenz_system(), sinusoid_pair(), [1.0, 1.0, 1.0], duration=150.0, transient=50.0)
        reservoir = build(ReservoirConfig())
        report = reservoir.train(run.states, run.forcing)
        self.assertTrue(np.all(report.nrmse < 0.05), report.nrmse)


class InferTests(SimpleTestCase):
    def setUp(self):
        self.observations, forcing = toy_data(samples=400)
        self.reservoir = build(small_config(M=30, density=0.3))
        self.reservoir.train(self.observations, forcing)

    def test_untrained_readout(self):
        with self.assertRaises(UntrainedReadoutError):
            build(small_config()).infer([0.0, 0.0, 0.0])

    def test_streaming_matches_batch(self):
        batch = self.reservoir.predict_series(self.observations).samples
        self.reservoir.reset()
        streamed = np.array([self.reservoir.infer(x) for x in self.observations.samples])
        np.testing.assert_array_equal(streamed, batch)

    def test_causality(self):
        full = self.reservoir.predict_series(self.observations).samples
        prefix = self.reservoir.predict_series(self.observations.slice(0, 150)).samples
        np.testing.assert_array_equal(prefix, full[:150])

    def test_estimate_labels(self):
        estimate = self.reservoir.predict_series(self.observations)
        self.assertEqual(estimate.labels, ('u_x', 'u_y'))

    def test_clone_is_independent(self):
        clone = self.reservoir.clone()
        clone.infer([1.0, 2.0, 3.0])
        np.testing.assert_array_equal(self.reservoir.r, np.zeros(30))
        self.assertIsNot(clone.W_out, self.reservoir.W_out)


class PersistenceTests(SimpleTestCase):
    def setUp(self):
        self.observations, forcing = toy_data(samples=300)
        self.reservoir = build(small_config(M=25, density=0.3))
        self.reservoir.train(self.observations, forcing)
        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def test_reload_is_bit_identical(self):
        path = save_reservoir(self.reservoir, Path(self.directory.name) / 'reservoir.npz')
        loaded = load_reservoir(path)
        self.assertEqual(loaded.config, self.reservoir.config)
        expected = self.reservoir.predict_series(self.observations).samples
        np.testing.assert_array_equal(loaded.predict_series(self.observations).samples, expected)

    def test_internal_state_is_kept(self):
        for x in self.observations.samples[:10]:
            self.reservoir.infer(x)
        loaded = load_reservoir(save_reservoir(self.reservoir, Path(self.directory.name) / 'mid.npz'))
        np.testing.assert_array_equal(loaded.r, self.reservoir.r)
        np.testing.assert_array_equal(loaded.infer([0.1, 0.2, 0.3]), self.reservoir.infer([0.1, 0.2, 0.3]))

    def test_untrained_round_trip(self):
        fresh = build(small_config())
        loaded = load_reservoir(save_reservoir(fresh, Path(self.directory.name) / 'fresh.npz'))
        self.assertFalse(loaded.is_trained)
        np.testing.assert_array_equal(loaded.W_in, fresh.W_in)

    def test_unknown_version_is_rejected(self):
        path = Path(self.directory.name) / 'future.npz'
        with open(path, 'wb') as handle:
            np.savez(handle, format_version=np.array(FORMAT_VERSION + 1))
        with self.assertRaises(ConfigurationError):
            load_reservoir(path)
