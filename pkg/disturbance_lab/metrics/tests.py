import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase

from disturbance_lab.exceptions import ConfigurationError, DimensionError, UndefinedMetricError
from dynamics.forcing import offset_cosines, rossler_scaled, sinusoid_pair, square_pair
from dynamics.series import TimeSeries
from dynamics.systems import lorenz_system
from .coverage import aspect_ratio, coverage_ratio, polygon_centroid
from .distance import AttractorReference, GridIndex, attractor_distance, brute_force_nearest, build_reference
from .errors import nrmse
from .filters import moving_average, window_samples
from .sweep import SweepResult, suggest_gain


def circle(radius, count=1000, center=(0.0, 0.0)):
    theta = np.linspace(0.0, 2.0 * np.pi, count, endpoint=False)
    return np.column_stack([center[0] + radius * np.cos(theta), center[1] + radius * np.sin(theta)])


class GridIndexTests(SimpleTestCase):
    def test_random_instances_match_brute_force_exactly(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            reference = rng.normal(size=(1000, 3)) * rng.uniform(0.5, 20.0, size=3)
            queries = rng.normal(size=(100, 3)) * rng.uniform(0.5, 30.0, size=3) + rng.normal(size=3)
            expected, _ = brute_force_nearest(queries, reference)
            distances, indices = GridIndex(reference).query(queries)
            np.testing.assert_array_equal(distances, expected, err_msg=f"trial {trial}")
            np.testing.assert_allclose(np.linalg.norm(queries - reference[indices], axis=1), expected, rtol=1e-12)

    def test_far_queries(self):
        reference = np.random.default_rng(1).uniform(size=(500, 3))
        queries = np.array([[1e4, -3e4, 2e4], [0.5, 0.5, 0.5]])
        expected, _ = brute_force_nearest(queries, reference)
        distances, _ = GridIndex(reference).query(queries)
        np.testing.assert_array_equal(distances, expected)

    def test_single_point_reference(self):
        distances, indices = GridIndex([[1.0, 2.0, 3.0]]).query([[1.0, 2.0, 7.0]])
        np.testing.assert_array_equal(distances, [4.0])
        np.testing.assert_array_equal(indices, [0])

    def test_planar_and_clustered_points(self):
        rng = np.random.default_rng(2)
        reference = np.vstack([rng.normal(size=(300, 2)) * 0.01, rng.normal(size=(300, 2)) * 0.01 + 50.0])
        queries = rng.uniform(-10, 60, size=(200, 2))
        expected, _ = brute_force_nearest(queries, reference)
        distances, _ = GridIndex(reference).query(queries)
        np.testing.assert_array_equal(distances, expected)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            GridIndex(np.zeros((3, 3))).query(np.zeros((2, 2)))


class AttractorDistanceTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.reference = build_reference(lorenz_system(), duration=20.0, transient=10.0)

    def test_self_distance_is_zero(self):
        self.assertEqual(attractor_distance(self.reference.points, self.reference), 0.0)

    def test_translation_bound(self):
        delta = 1e-3
        shifted = TimeSeries(0.002, self.reference.points.samples + [delta, 0.0, 0.0])
        d = attractor_distance(shifted, self.reference)
        self.assertGreater(d, 0.0)
        self.assertLessEqual(d, delta)

    def test_reordered_reference_gives_same_distance(self):
        trajectory = TimeSeries(0.002, self.reference.points.samples[::37] + 0.3)
        permuted = np.random.default_rng(5).permutation(self.reference.points.samples)
        shuffled = AttractorReference(TimeSeries(0.002, permuted))
        self.assertEqual(attractor_distance(trajectory, self.reference), attractor_distance(trajectory, shuffled))

    def test_matches_double_loop(self):
        rng = np.random.default_rng(3)
        trajectory = TimeSeries(0.002, rng.normal(size=(100, 3)) * 10.0 + [0.0, 0.0, 25.0])
        points = self.reference.points.samples[::10]
        oracle = np.mean([min(np.sqrt(np.sum((p - q) ** 2)) for q in points) for p in trajectory.samples])
        small = AttractorReference(TimeSeries(0.002, points))
        self.assertAlmostEqual(attractor_distance(trajectory, small), oracle, places=12)

    def test_reference_is_post_transient(self):
        self.assertEqual(len(self.reference.points), 10001)
        self.assertAlmostEqual(self.reference.points.start_time, 10.0)


class NrmseTests(SimpleTestCase):
    def setUp(self):
        t = np.linspace(0.0, 10.0, 1001)
        self.truth = TimeSeries(0.01, np.column_stack([np.sin(t), 2.0 * np.cos(3.0 * t)]))

    def test_perfect_estimate(self):
        np.testing.assert_array_equal(nrmse(self.truth, self.truth, discard=0), [0.0, 0.0])

    def test_constant_bias(self):
        biased = TimeSeries(0.01, self.truth.samples + 0.25)
        expected = 0.25 / self.truth.samples[100:].std(axis=0)
        np.testing.assert_allclose(nrmse(biased, self.truth, discard=100), expected, rtol=1e-12)

    def test_mean_predictor_scores_one(self):
        mean = TimeSeries(0.01, np.tile(self.truth.samples.mean(axis=0), (len(self.truth), 1)))
        np.testing.assert_allclose(nrmse(mean, self.truth, discard=0), [1.0, 1.0], rtol=1e-12)

    def test_zero_variance_channel(self):
        flat = TimeSeries(0.01, np.column_stack([self.truth.samples[:, 0], np.ones(len(self.truth))]))
        with self.assertLogs('metrics.errors', level='WARNING'):
            result = nrmse(flat, flat, discard=0)
        self.assertEqual(result[0], 0.0)
        self.assertTrue(np.isnan(result[1]))
        with self.assertRaises(UndefinedMetricError):
            nrmse(flat, flat, discard=0, strict=True)

    def test_discard_must_leave_samples(self):
        with self.assertRaises(ConfigurationError):
            nrmse(self.truth, self.truth, discard=1001)


class MovingAverageTests(SimpleTestCase):
    def test_window_is_forced_odd(self):
        self.assertEqual(window_samples(0.02, 0.0001), 201)
        self.assertEqual(window_samples(0.006, 0.002), 3)
        self.assertEqual(window_samples(0.004, 0.002), 3)
        with self.assertRaises(ConfigurationError):
            window_samples(0.001, 0.002)

    def test_constant_series_unchanged(self):
        series = TimeSeries(0.002, np.full((500, 2), 3.7))
        np.testing.assert_allclose(moving_average(series, 0.05).samples, series.samples, rtol=1e-12)

    def test_alternating_series(self):
        values = (-1.0) ** np.arange(20)
        smoothed = moving_average(TimeSeries(1.0, values), 3.0).samples[:, 0]
        np.testing.assert_allclose(smoothed[1:-1], -values[1:-1] / 3.0, rtol=1e-12)
        self.assertEqual(smoothed[0], values[0])
        self.assertEqual(smoothed[-1], values[-1])

    def test_edges_shrink_symmetrically(self):
        series = TimeSeries(1.0, np.arange(10.0))
        smoothed = moving_average(series, 5.0).samples[:, 0]
        np.testing.assert_allclose(smoothed, np.arange(10.0), rtol=1e-12)

    def test_white_noise_variance_reduction(self):
        noise = np.random.default_rng(4).normal(size=200_000)
        smoothed = moving_average(TimeSeries(1.0, noise), 21.0).samples[100:-100, 0]
        self.assertAlmostEqual(smoothed.var() * 21.0, 1.0, delta=0.2)

    def test_mean_is_preserved_for_interior_signal(self):
        t = np.arange(4000.0)
        bump = np.where(np.abs(t - 2000.0) < 1000.0, np.cos(np.pi * (t - 2000.0) / 2000.0) ** 2, 0.0)
        smoothed = moving_average(TimeSeries(1.0, bump), 101.0).samples[:, 0]
        self.assertAlmostEqual(smoothed.mean() / bump.mean(), 1.0, delta=1e-12)


class CoverageTests(SimpleTestCase):
    def test_contained_disturbance(self):
        report = coverage_ratio(circle(1.0), circle(0.5))
        self.assertLessEqual(report.ratio, 1.0)
        self.assertFalse(report.degenerate)

    def test_scaled_circle(self):
        report = coverage_ratio(circle(1.0), circle(3.0))
        self.assertAlmostEqual(report.ratio, 3.0, delta=1e-4)
        np.testing.assert_allclose(report.centroid, [0.0, 0.0], atol=1e-12)

    def test_scale_equivariance(self):
        training = circle(1.0, 50) + [2.0, -1.0]
        disturbance = np.random.default_rng(6).normal(size=(300, 2)) + [2.5, -1.0]
        base = coverage_ratio(training, disturbance)
        scaled = base.centroid + 4.0 * (disturbance - base.centroid)
        self.assertAlmostEqual(coverage_ratio(training, scaled).ratio, 4.0 * base.ratio, places=9)

    def test_collinear_training_has_no_hull(self):
        line = np.column_stack([np.linspace(-1, 1, 50), np.linspace(-1, 1, 50)])
        with self.assertLogs('metrics.coverage', level='WARNING'):
            report = coverage_ratio(line, circle(0.5))
        self.assertTrue(report.degenerate)
        self.assertTrue(math.isinf(report.ratio))
        self.assertTrue(math.isinf(report.measured))

    def test_forcing_menu(self):
        times = 0.002 * np.arange(75_001)
        rossler = rossler_scaled(0.002, 150.0).sample(times)[:, :2]
        sinusoid = coverage_ratio(sinusoid_pair().sample(times)[:, :2], rossler)
        square = coverage_ratio(square_pair().sample(times)[:, :2], rossler)
        with self.assertLogs('metrics.coverage', level='WARNING'):
            offset = coverage_ratio(offset_cosines().sample(times)[:, :2], rossler)
        self.assertFalse(sinusoid.degenerate)
        self.assertFalse(square.degenerate)
        self.assertTrue(offset.degenerate)
        self.assertLess(offset.aspect, 0.05)
        self.assertTrue(math.isinf(offset.ratio))
        self.assertTrue(math.isfinite(offset.measured))
        self.assertGreater(offset.measured, sinusoid.ratio)
        self.assertEqual(sinusoid.measured, sinusoid.ratio)
        self.assertTrue(math.isfinite(square.ratio))

    def test_requires_planar_input(self):
        with self.assertRaises(DimensionError):
            coverage_ratio(np.zeros((5, 3)), np.zeros((5, 3)))

    def test_helpers(self):
        square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
        np.testing.assert_allclose(polygon_centroid(square), [1.0, 1.0])
        self.assertAlmostEqual(aspect_ratio(circle(1.0)), 1.0, places=9)


class SweepResultTests(SimpleTestCase):
    def sweep(self):
        result = SweepResult('delayed')
        for alpha, distance in ((0.0, 8.0), (1.0, 4.0), (10.0, 1.0), (100.0, 0.98), (1000.0, None)):
            result.add(alpha, distance)
        return result

    def test_csv_layout(self):
        with tempfile.TemporaryDirectory() as directory:
            path = self.sweep().to_csv(Path(directory) / 'sweep.csv')
            frame = pd.read_csv(path)
        self.assertEqual(list(frame.columns), ['alpha', 'distance', 'stable'])
        self.assertEqual(frame['stable'].tolist(), [True, True, True, True, False])
        self.assertTrue(np.isnan(frame['distance'].iloc[-1]))

    def test_suggested_gain(self):
        self.assertEqual(suggest_gain(self.sweep()), 10.0)
        self.assertIsNone(suggest_gain(self.sweep(), tolerance=0.001))

    def test_lengths_must_agree(self):
        with self.assertRaises(DimensionError):
            SweepResult('simple', [0.0, 1.0], [1.0], [True])
