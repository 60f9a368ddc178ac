import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from disturbance_lab.exceptions import DimensionError, DivergenceError, GridValidationError, HorizonError
from .forcing import (
    ForcingKind, constant, eval_forcing, external_series, offset_cosines, ornstein_uhlenbeck, ou_path,
    piecewise_constant, pulse, rossler_scaled, sinusoid_pair, square_pair, zero,
)
from .integrate import integrate_forced
from .series import TimeSeries
from .systems import (
    SystemDefinition, linear_decay_system, lorenz_drift, lorenz_fixed_point, lorenz_system, null_system, rossler_step,
)


class LorenzDriftTests(SimpleTestCase):
    def test_origin_is_fixed(self):
        np.testing.assert_array_equal(lorenz_drift([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0])

    def test_hand_evaluated_point(self):
        np.testing.assert_allclose(lorenz_drift([1.0, 1.0, 1.0], 10.0, 28.0, 8.0 / 3.0), [0.0, 26.0, 1.0 - 8.0 / 3.0])

    def test_nontrivial_fixed_point(self):
        np.testing.assert_allclose(lorenz_drift(lorenz_fixed_point()), [0.0, 0.0, 0.0], atol=1e-12)

    def test_wrong_dimension(self):
        with self.assertRaises(DimensionError):
            lorenz_drift([1.0, 2.0])


class RosslerStepTests(SimpleTestCase):
    def test_single_step_from_origin(self):
        np.testing.assert_allclose(rossler_step([0.0, 0.0, 0.0], 0.002), [0.0, 0.0, 0.0004], atol=1e-18)

    def test_zero_step_leaves_state_unchanged(self):
        np.testing.assert_array_equal(rossler_step([1.0, -2.0, 3.0], 0.0), [1.0, -2.0, 3.0])

    def test_long_run_stays_bounded(self):
        state = np.array([1.0, 1.0, 1.0])
        peak = 0.0
        for _ in range(75_000):
            state = rossler_step(state, 0.002)
            peak = max(peak, np.abs(state).max())
        self.assertLess(peak, 100.0)


class OrnsteinUhlenbeckTests(SimpleTestCase):
    def test_noiseless_path_decays_exponentially(self):
        dt, n = 0.002, 1000
        path = ou_path(n, dt, 0.0, seed=1, x0=4.0)
        expected = 4.0 * (1.0 - dt / 2.0) ** np.arange(n + 1)
        np.testing.assert_allclose(path.samples[:, 0], expected, rtol=1e-12)

    def test_stationary_variance(self):
        path = ou_path(1_000_000, 0.01, 1.25, seed=2024)
        variance = path.samples[10_000:, 0].var()
        self.assertLess(abs(variance - 2.5) / 2.5, 0.10)

    def test_same_seed_replays(self):
        first = ornstein_uhlenbeck(1.25, 0.002, 10.0, seed=5)
        second = ornstein_uhlenbeck(1.25, 0.002, 10.0, seed=5)
        np.testing.assert_array_equal(first.series.samples, second.series.samples)
        self.assertFalse(np.array_equal(first.series.samples[:, 0], first.series.samples[:, 1]))


class ForcingTests(SimpleTestCase):
    def test_sinusoid_pair_at_phase_zero(self):
        np.testing.assert_allclose(eval_forcing(sinusoid_pair(), 0.0), [1.0, 0.0, 0.0])

    def test_offset_cosines_at_phase_zero(self):
        np.testing.assert_allclose(eval_forcing(offset_cosines(), 0.0), [1.0, np.cos(0.05), 0.0])

    def test_square_pair_signs(self):
        t = (7.0 * np.pi / 4.0) / 0.05
        np.testing.assert_array_equal(eval_forcing(square_pair(), t), [1.0, -1.0, 0.0])

    def test_piecewise_constant_cycles_three_levels(self):
        signal = piecewise_constant([[1, 0], [-1, 1], [0, -1]], hold=2.0)
        values = signal.sample([0.5, 2.5, 4.5, 6.5])
        np.testing.assert_array_equal(values[:, :2], [[1, 0], [-1, 1], [0, -1], [1, 0]])

    def test_localized_and_constant_kinds(self):
        np.testing.assert_allclose(eval_forcing(constant([5.0, 5.0]), 3.0), [5.0, 5.0, 0.0])
        bump = pulse([2.0, 1.0], center=10.0, width=1.0)
        np.testing.assert_allclose(eval_forcing(bump, 10.0), [2.0, 1.0, 0.0])
        self.assertLess(np.abs(eval_forcing(bump, 30.0)).max(), 1e-12)

    def test_inactive_components_are_exactly_zero(self):
        signal = rossler_scaled(0.002, 20.0, scale=0.1, transient=5.0)
        values = signal.sample(0.002 * np.arange(1000))
        self.assertTrue(np.all(values[:, 2] == 0.0))
        self.assertTrue(np.any(values[:, 0] != 0.0))
        np.testing.assert_array_equal(zero().sample([0.0, 1.0]), np.zeros((2, 3)))

    def test_sampled_signal_uses_grid_and_interpolates_off_grid(self):
        series = TimeSeries(0.5, np.array([[0.0, 1.0], [1.0, 3.0], [2.0, 5.0]]), ('a', 'b'))
        signal = external_series(series)
        np.testing.assert_array_equal(eval_forcing(signal, 0.5), [1.0, 3.0, 0.0])
        np.testing.assert_allclose(eval_forcing(signal, 0.75), [1.5, 4.0, 0.0])
        with self.assertRaises(HorizonError):
            eval_forcing(signal, 1.5)

    def test_unknown_kind_is_rejected(self):
        from disturbance_lab.exceptions import ConfigurationError
        from .forcing import ForcingSignal
        with self.assertRaises(ConfigurationError):
            ForcingSignal('triangle')
        self.assertIn('square-pair', ForcingKind.values)


class IntegrateForcedTests(SimpleTestCase):
    def test_fixed_point_is_stationary(self):
        fixed = lorenz_fixed_point()
        run = integrate_forced(lorenz_system(), zero(), fixed, dt=0.002, duration=1.0)
        np.testing.assert_allclose(run.states.samples, np.tile(fixed, (len(run.states), 1)), atol=1e-9)

    def test_pure_integration_of_constant_forcing(self):
        run = integrate_forced(null_system(), constant([1.0, 0.0], active=(0, 1)), [0.0, 0.0, 0.0], dt=0.002, duration=1.0)
        self.assertEqual(len(run.states), 501)
        np.testing.assert_allclose(run.states.samples[-1], [1.0, 0.0, 0.0], atol=1e-12)

    def test_linear_decay_matches_closed_form(self):
        dt = 0.01
        run = integrate_forced(linear_decay_system(1.0), zero(dimension=1), [2.0], dt=dt, duration=5.0)
        expected = 2.0 * (1.0 - dt) ** np.arange(len(run.states))
        np.testing.assert_allclose(run.states.samples[:, 0], expected, rtol=1e-12)

    def test_forcing_is_recorded_on_the_state_grid(self):
        signal = sinusoid_pair()
        run = integrate_forced(lorenz_system(), signal, [1.0, 1.0, 1.0], dt=0.002, duration=2.0, transient=1.0)
        self.assertTrue(run.states.same_grid(run.forcing))
        self.assertAlmostEqual(run.states.start_time, 1.0)
        np.testing.assert_array_equal(run.forcing.samples, signal.sample(run.forcing.times))

    def test_transient_is_discarded(self):
        full = integrate_forced(lorenz_system(), zero(), [1.0, 1.0, 1.0], dt=0.002, duration=2.0)
        tail = integrate_forced(lorenz_system(), zero(), [1.0, 1.0, 1.0], dt=0.002, duration=1.0, transient=1.0)
        np.testing.assert_array_equal(full.states.samples[500:], tail.states.samples)

    def test_divergence_reports_step(self):
        blowup = SystemDefinition('blowup', 1, lambda s: 1e3 * s ** 2)
        with self.assertRaises(DivergenceError) as ctx:
            integrate_forced(blowup, zero(dimension=1), [1.0], dt=0.1, duration=10.0)
        self.assertGreater(ctx.exception.step, 0)

    def test_lorenz_with_rossler_disturbance_stays_bounded(self):
        disturbance = rossler_scaled(0.002, 200.0, scale=0.1)
        run = integrate_forced(lorenz_system(), disturbance, [1.0, 1.0, 1.0], dt=0.002, duration=150.0, transient=50.0)
        self.assertEqual(len(run.states), 75_001)
        self.assertTrue(np.all(np.isfinite(run.states.samples)))
        self.assertLess(np.abs(run.states.samples).max(), 100.0)


class TimeSeriesCsvTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / 'series.csv'

    def test_round_trip_is_exact(self):
        rng = np.random.default_rng(0)
        series = TimeSeries(0.002, rng.standard_normal((200, 3)), ('x', 'y', 'z'), start_time=50.0)
        series.to_csv(self.path)
        loaded = TimeSeries.read_csv(self.path)
        np.testing.assert_array_equal(loaded.samples, series.samples)
        self.assertEqual(loaded.labels, series.labels)
        self.assertTrue(loaded.same_grid(series))

    def test_shuffled_rows_fail_grid_validation(self):
        series = TimeSeries(0.1, np.arange(20.0), ('x',))
        frame = series.to_frame().sample(frac=1.0, random_state=3)
        frame.to_csv(self.path, index=False)
        with self.assertRaises(GridValidationError):
            TimeSeries.read_csv(self.path)

    def test_missing_channel(self):
        TimeSeries(0.1, np.zeros((5, 2)), ('x', 'y')).to_csv(self.path)
        with self.assertRaises(GridValidationError):
            TimeSeries.read_csv(self.path, channels=('x', 'z'))

    def test_missing_time_column(self):
        pd.DataFrame({'x': [1.0, 2.0]}).to_csv(self.path, index=False)
        with self.assertRaises(GridValidationError):
            TimeSeries.read_csv(self.path)
