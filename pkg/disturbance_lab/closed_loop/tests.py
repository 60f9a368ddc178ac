import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from disturbance_lab.exceptions import ConfigurationError, DivergenceError
from dynamics.forcing import constant, rossler_scaled, sinusoid_pair
from dynamics.integrate import integrate_forced
from dynamics.systems import linear_decay_system, lorenz_system, null_system
from reservoir.esn import ReservoirConfig, build
from .loops import ControlLoopConfig, ControlScheme, run_delayed, run_loop, run_simple
from .stability import (
    Stability, fixed_point, iterate_surrogate, iterated_stability, simple_surrogate_stability, surrogate_spectrum,
    surrogate_stability,
)


class FiniteDifferenceEstimator:
    """
    Ideal one-step estimator for a system with F ≡ 0: reports the forcing
    that produced the last step, (x(t) − x(t−Δt))/Δt. In the loop this is
    exactly the surrogate map u⁺ = g − α c.
    """

    def __init__(self, dt, output_channels=(0, 1)):
        self.dt = dt
        self.output_channels = tuple(output_channels)
        self.previous = None

    def reset(self):
        self.previous = None

    def infer(self, x):
        x = np.asarray(x, dtype=float)
        if self.previous is None:
            u = np.zeros(len(self.output_channels))
        else:
            u = (x - self.previous)[list(self.output_channels)] / self.dt
        self.previous = x.copy()
        return u


class SaturatingEstimator(FiniteDifferenceEstimator):
    """Finite-difference estimate clipped to ±limit, like a tanh-bounded readout."""

    def __init__(self, dt, limit=1000.0, output_channels=(0, 1)):
        super().__init__(dt, output_channels)
        self.limit = limit

    def infer(self, x):
        return np.clip(super().infer(x), -self.limit, self.limit)


def small_trained_reservoir():
    run = integrate_forced(lorenz_system(), sinusoid_pair(), [1.0, 1.0, 1.0], duration=20.0, transient=5.0)
    reservoir = build(ReservoirConfig(M=60, washout_steps=500, seed=8))
    reservoir.train(run.states, run.forcing)
    return reservoir


class ControlLoopConfigTests(SimpleTestCase):
    def test_delayed_needs_tau_above_dt(self):
        with self.assertRaises(ConfigurationError):
            ControlLoopConfig(scheme='delayed', tau=0.002, dt=0.002)
        ControlLoopConfig(scheme='simple', tau=0.002, dt=0.002)

    def test_rejects_negative_gain_and_unknown_scheme(self):
        with self.assertRaises(ConfigurationError):
            ControlLoopConfig(alpha=-1.0)
        with self.assertRaises(ConfigurationError):
            ControlLoopConfig(scheme='adaptive')

    def test_rejects_bad_instability_settings(self):
        with self.assertRaises(ConfigurationError):
            ControlLoopConfig(feedback_ratio_limit=0.0)
        with self.assertRaises(ConfigurationError):
            ControlLoopConfig(instability_window=0.0)

    def test_default_delay_ratio(self):
        self.assertAlmostEqual(ControlLoopConfig().tau_over_dt, 1000.0)

    def test_runner_checks_scheme(self):
        cfg = ControlLoopConfig(scheme='simple', duration=1.0, transient=0.0)
        with self.assertRaises(ConfigurationError):
            run_delayed(null_system(), constant([1.0, 1.0]), FiniteDifferenceEstimator(cfg.dt), cfg)


class ZeroGainTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.reservoir = small_trained_reservoir()
        cls.disturbance = rossler_scaled(0.002, 6.0, scale=0.1)
        cls.reference = integrate_forced(lorenz_system(), cls.disturbance, [1.0, 1.0, 1.0], duration=4.0, transient=2.0)

    def test_simple_matches_open_loop_bit_exactly(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=0.0, duration=4.0, transient=2.0)
        record = run_simple(lorenz_system(), self.disturbance, self.reservoir.clone(), cfg)
        np.testing.assert_array_equal(record.states.samples, self.reference.states.samples)
        self.assertFalse(record.diverged)

    def test_delayed_matches_open_loop_bit_exactly(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=0.0, duration=4.0, transient=2.0)
        record = run_delayed(lorenz_system(), self.disturbance, self.reservoir.clone(), cfg)
        np.testing.assert_array_equal(record.states.samples, self.reference.states.samples)

    def test_filter_is_a_moving_average_of_the_estimate(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=0.0, tau=0.5, duration=4.0, transient=2.0)
        record = run_delayed(lorenz_system(), self.disturbance, self.reservoir.clone(), cfg)
        u, v = record.estimate.samples, record.filtered.samples
        np.testing.assert_allclose(v[1:], v[:-1] + (cfg.dt / cfg.tau) * (u[:-1] - v[:-1]), rtol=0, atol=1e-15)

    def test_effective_forcing_is_recomputable(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=3.0, duration=2.0, transient=1.0)
        record = run_delayed(lorenz_system(), self.disturbance, self.reservoir.clone(), cfg)
        expected = record.disturbance.samples.copy()
        expected[:, [0, 1]] -= 3.0 * record.filtered.samples
        np.testing.assert_allclose(record.effective_forcing.samples, expected, rtol=0, atol=1e-12)
        self.assertTrue(record.states.same_grid(record.estimate))
        self.assertTrue(record.states.same_grid(record.disturbance))

    def test_csv_columns(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=1.0, duration=1.0, transient=0.0)
        record = run_delayed(lorenz_system(), self.disturbance, self.reservoir.clone(), cfg)
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / 'loop.csv'
            record.to_csv(path)
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['t', 'x', 'y', 'z', 'u_x', 'u_y', 'v_x', 'v_y', 'g_x', 'g_y'])
        self.assertEqual(len(frame), 501)

    def test_simple_csv_has_no_filter_columns(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=0.5, duration=1.0, transient=0.0)
        record = run_simple(lorenz_system(), self.disturbance, self.reservoir.clone(), cfg)
        self.assertEqual(list(record.to_frame().columns), ['t', 'x', 'y', 'z', 'u_x', 'u_y', 'g_x', 'g_y'])


class SurrogateLoopTests(SimpleTestCase):
    g = constant([5.0, 5.0])

    def test_simple_loop_reaches_fixed_point(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=0.5, duration=2.0, transient=0.0)
        record = run_simple(null_system(), self.g, FiniteDifferenceEstimator(cfg.dt), cfg)
        np.testing.assert_allclose(record.estimate.samples[-1], [5.0 / 1.5, 5.0 / 1.5], rtol=1e-9)
        self.assertAlmostEqual(record.suppression_ratio(discard=500), 1.0 / 1.5, places=9)

    def test_simple_loop_follows_the_surrogate_map(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=0.5, duration=0.2, transient=0.0)
        record = run_simple(null_system(), self.g, FiniteDifferenceEstimator(cfg.dt), cfg)
        oracle = iterate_surrogate(0.5, None, g=5.0, steps=len(record.estimate) - 1)
        np.testing.assert_allclose(record.estimate.samples[:, 0], oracle[:, 0], rtol=0, atol=1e-9)

    def test_delayed_loop_follows_the_surrogate_map(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=10.0, tau=0.1, duration=2.0, transient=0.0)
        record = run_delayed(null_system(), self.g, FiniteDifferenceEstimator(cfg.dt), cfg)
        oracle = iterate_surrogate(10.0, cfg.tau_over_dt, g=5.0, steps=len(record.estimate) - 1)
        np.testing.assert_allclose(record.estimate.samples[:, 1], oracle[:, 0], rtol=0, atol=1e-7)
        np.testing.assert_allclose(record.filtered.samples[:, 1], oracle[:, 1], rtol=0, atol=1e-7)
        np.testing.assert_allclose(record.estimate.samples[-1], [5.0 / 11.0] * 2, rtol=1e-6)

    def test_delayed_loop_diverges_beyond_the_bound(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=60.0, tau=0.1, duration=50.0, transient=0.0)
        record = run_delayed(null_system(), self.g, FiniteDifferenceEstimator(cfg.dt), cfg)
        self.assertTrue(record.diverged)
        self.assertLess(len(record.states), 25_001)
        self.assertTrue(np.all(np.isfinite(record.states.samples)))
        with self.assertRaises(DivergenceError) as caught:
            record.raise_for_divergence()
        self.assertEqual(caught.exception.step, record.diverged_at)

    def test_divergence_inside_the_transient_keeps_one_sample(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=3.0, duration=1.0, transient=40.0)
        record = run_loop(null_system(), self.g, FiniteDifferenceEstimator(cfg.dt), cfg)
        self.assertTrue(record.diverged)
        self.assertEqual(len(record.states), 1)
        self.assertLess(record.states.start_time, 40.0)


class RunawayFeedbackTests(SimpleTestCase):
    g = constant([5.0, 5.0])
    system = linear_decay_system(rate=1.0, dimension=3)

    def test_bounded_runaway_is_flagged(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=5.0, duration=20.0, transient=0.0)
        with self.assertLogs('closed_loop.loops', level='WARNING'):
            record = run_simple(self.system, self.g, SaturatingEstimator(cfg.dt), cfg)
        self.assertTrue(record.diverged)
        self.assertLess(np.abs(record.states.samples).max(), cfg.divergence_threshold)
        self.assertLess(len(record.states), 10_001)
        with self.assertRaises(DivergenceError):
            record.raise_for_divergence()

    def test_stable_gain_is_not_flagged(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=0.5, duration=20.0, transient=0.0)
        record = run_simple(self.system, self.g, SaturatingEstimator(cfg.dt), cfg)
        self.assertFalse(record.diverged)
        self.assertEqual(len(record.states), 10_001)

    def test_limit_is_configurable(self):
        cfg = ControlLoopConfig(scheme='simple', alpha=5.0, duration=20.0, transient=0.0,
                                feedback_ratio_limit=1e9)
        record = run_simple(self.system, self.g, SaturatingEstimator(cfg.dt), cfg)
        self.assertFalse(record.diverged)

    def test_zero_disturbance_uses_the_floor(self):
        cfg = ControlLoopConfig(scheme='delayed', alpha=10.0, duration=10.0, transient=0.0)
        record = run_delayed(self.system, constant([0.0, 0.0]), SaturatingEstimator(cfg.dt), cfg)
        self.assertFalse(record.diverged)


class SurrogateStabilityTests(SimpleTestCase):
    def test_small_gain_is_stable(self):
        self.assertEqual(surrogate_stability(0.5, 10.0), Stability.STABLE)

    def test_marginal_gain_is_unstable(self):
        self.assertEqual(surrogate_stability(50.0, 50.0), Stability.UNSTABLE)
        self.assertAlmostEqual(surrogate_spectrum(50.0, 50.0)[0], 1.0, places=12)

    def test_flip_at_tau_over_dt(self):
        verdicts = [surrogate_stability(alpha, 100.0) for alpha in range(1, 201)]
        flip = verdicts.index(Stability.UNSTABLE) + 1
        self.assertEqual(flip, 100)
        self.assertTrue(all(v == Stability.UNSTABLE for v in verdicts[99:]))

    def test_iteration_confirms_the_flip(self):
        for alpha in (1, 50, 99, 100, 101, 150, 200):
            self.assertEqual(iterated_stability(alpha, 100.0), surrogate_stability(alpha, 100.0), alpha)

    def test_grid_agrees_with_direct_iteration(self):
        fractions = (0.1, 0.3, 0.5, 0.8, 0.9, 1.0, 1.1, 1.5, 2.0, 3.0)
        grid = [(n * f, n) for n in (10.0, 25.0, 50.0, 100.0, 200.0) for f in fractions]
        self.assertEqual(len(grid), 50)
        for alpha, n in grid:
            self.assertEqual(surrogate_stability(alpha, n), iterated_stability(alpha, n), (alpha, n))

    def test_stable_iterates_reach_the_fixed_point(self):
        history = iterate_surrogate(10.0, 50.0, g=2.0)
        np.testing.assert_allclose(history[-1], [fixed_point(10.0, 2.0)] * 2, rtol=1e-10)

    def test_simple_map(self):
        self.assertEqual(simple_surrogate_stability(0.9), Stability.STABLE)
        self.assertEqual(simple_surrogate_stability(1.0), Stability.UNSTABLE)
        self.assertEqual(iterated_stability(0.9), Stability.STABLE)
        self.assertEqual(iterated_stability(1.5), Stability.UNSTABLE)

    def test_invalid_arguments(self):
        with self.assertRaises(ConfigurationError):
            surrogate_stability(1.0, 0.0)
        with self.assertRaises(ConfigurationError):
            surrogate_stability(-1.0, 10.0)

    def test_scheme_choices(self):
        self.assertEqual(ControlScheme.values, ['simple', 'delayed'])
