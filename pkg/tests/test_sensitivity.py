#!/usr/bin/env python3
"""
Tests for the Morris screening harness and the parameter studies.
"""
import math
import os
import sys
import unittest
from concurrent.futures import ThreadPoolExecutor
from unittest.mock import patch

# Add the parent directory to the path so we can import the mgamsgd package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from mgamsgd.core.errors import ConfigurationError, DomainError, EvaluationError, SensitivityError
from mgamsgd.modules import sensitivity
from mgamsgd.modules.sensitivity import (
    DEFAULT_RANGES, GRID_DIFFERENCE, METRICS, ParamRange, apply_values, gamma_study, grid_study, morris_oat, mu,
    sigma,
)
from mgamsgd.modules.trainer import TrainConfig


def constant(cfg, seed):
    return 1.0, 2.0


def hidden_layers(cfg, seed):
    return float(cfg.n_h), 0.5


class TestStatistics(unittest.TestCase):
    """Tests for mu and sigma."""

    def test_small_sample(self):
        """Test mu and sigma of 1, 2, 3."""
        self.assertAlmostEqual(mu([1.0, 2.0, 3.0]), 1.0, places=14)
        self.assertAlmostEqual(sigma([1.0, 2.0, 3.0]), 1.0, places=14)

    def test_constant(self):
        """Test that a constant metric has zero spread."""
        self.assertEqual(mu([5.0, 5.0, 5.0, 5.0]), 0.0)
        self.assertEqual(sigma([5.0, 5.0, 5.0, 5.0]), 0.0)

    def test_two_points(self):
        """Test the n - 1 normalization on two points."""
        self.assertAlmostEqual(mu([0.0, 4.0]), 4.0, places=14)
        self.assertAlmostEqual(sigma([0.0, 4.0]), math.sqrt(8.0), places=14)

    def test_too_few(self):
        """Test that a single value has no spread."""
        with self.assertRaises(DomainError):
            mu([1.0])
        with self.assertRaises(DomainError):
            sigma([])


class TestSweepSetup(unittest.TestCase):
    """Tests for ranges and sweep configs."""

    def test_default_ranges(self):
        """Test the swept parameter set."""
        self.assertEqual(len(DEFAULT_RANGES), 11)
        self.assertIn(GRID_DIFFERENCE, [r.name for r in DEFAULT_RANGES])

    def test_float_levels(self):
        """Test equispaced levels."""
        self.assertEqual(ParamRange("beta_i", 0.0, 2.0, 0.0).levels(5), [0.0, 0.5, 1.0, 1.5, 2.0])

    def test_integer_levels_deduplicated(self):
        """Test that rounded integer levels are unique."""
        self.assertEqual(ParamRange("N_h", 2, 3, 2, integer=True).levels(4), [2.0, 3.0])
        self.assertEqual(ParamRange("N_h", 2, 6, 3, integer=True).levels(3), [2.0, 4.0, 6.0])

    def test_invalid_range(self):
        """Test range validation."""
        with self.assertRaises(ConfigurationError):
            ParamRange("N_q", 0, 1, 0)
        with self.assertRaises(ConfigurationError):
            ParamRange("lr_c", 0.5, 1.0, 2.0)
        with self.assertRaises(ConfigurationError):
            ParamRange("lr_c", 0.5, 1.0, 0.7).levels(1)

    def test_apply_values(self):
        """Test notation values on a config."""
        cfg = apply_values(TrainConfig(), {"N_h": 4.0, "lr_c": 0.8, "N_x": 10.0})
        self.assertEqual(cfg.n_h, 4)
        self.assertIsInstance(cfg.n_h, int)
        self.assertEqual(cfg.lr_c, 0.8)
        self.assertEqual((cfg.nx, cfg.ny, cfg.nz), (10, 10, 10))

    def test_grid_difference(self):
        """Test that the grid difference shrinks N_y and N_z."""
        cfg = apply_values(TrainConfig(), {GRID_DIFFERENCE: 8.0, "N_x": 10.0})
        self.assertEqual((cfg.nx, cfg.ny, cfg.nz), (10, 2, 2))
        with self.assertRaises(ConfigurationError):
            apply_values(TrainConfig(), {"N_x": 5.0, GRID_DIFFERENCE: 4.0})


class TestMorrisOat(unittest.TestCase):
    """Tests for the one-at-a-time sweep."""

    def test_constant_metrics(self):
        """Test that a constant evaluator gives zero spread everywhere."""
        result = morris_oat(levels=4, reps=2, evaluate=constant)
        table = result.table()
        self.assertEqual(len(table), 11 * len(METRICS))
        self.assertTrue(all(row["mu"] == 0.0 and row["sigma"] == 0.0 for row in table))
        self.assertEqual(result.missing, 0)

    def test_linear_metric(self):
        """Test mu and sigma of a metric that equals the swept value."""
        ranges = (ParamRange("N_h", 1, 3, 2, integer=True), ParamRange("lr_c", 0.5, 1.0, 0.7))
        result = morris_oat(ranges, levels=3, reps=1, evaluate=hidden_layers)
        self.assertAlmostEqual(result.stats[("N_h", "average_mse")][0], 1.0, places=14)
        self.assertAlmostEqual(result.stats[("N_h", "minimum_mse")][1], 1.0, places=14)
        self.assertEqual(result.stats[("lr_c", "average_mse")], (0.0, 0.0))
        self.assertEqual(result.stats[("N_h", "average_time")], (0.0, 0.0))
        self.assertEqual(len(result.sample_rows()), 6)

    def test_seeds_per_replication(self):
        """Test that replication r trains with seed + r."""
        seen = []

        def record(cfg, seed):
            seen.append(seed)
            return 1.0, 1.0

        morris_oat((ParamRange("lr_c", 0.5, 1.0, 0.7),), levels=2, reps=3, seed=10, evaluate=record)
        self.assertEqual(sorted(set(seen)), [10, 11, 12])

    def test_missing_samples(self):
        """Test that failed replications are counted and excluded."""
        def flaky(cfg, seed):
            if seed == 1:
                raise EvaluationError("non-finite loss", "mse", math.inf)
            return cfg.lr_c, 1.0

        result = morris_oat((ParamRange("lr_c", 0.5, 1.0, 0.7),), levels=2, reps=2, evaluate=flaky)
        self.assertEqual(result.missing, 2)
        self.assertTrue(all(s.completed == 1 for s in result.samples))

    def test_too_few_valid_points(self):
        """Test that a parameter with one surviving level aborts the sweep."""
        def failing(cfg, seed):
            return (math.nan if cfg.lr_c > 0.6 else 1.0), 1.0

        with self.assertRaises(SensitivityError):
            morris_oat((ParamRange("lr_c", 0.5, 1.0, 0.7),), levels=2, reps=1, evaluate=failing)

    def test_worker_count_does_not_change_results(self):
        """Test that parallel evaluation matches the serial sweep."""
        ranges = (ParamRange("N_h", 1, 3, 2, integer=True), ParamRange("M_g", 0.1, 0.5, 0.1))
        serial = morris_oat(ranges, levels=3, reps=2, evaluate=hidden_layers)
        with patch.object(sensitivity, "ProcessPoolExecutor", ThreadPoolExecutor):
            parallel = morris_oat(ranges, levels=3, reps=2, evaluate=hidden_layers, workers=2)
        self.assertEqual(serial.table(), parallel.table())

    def test_invalid_arguments(self):
        """Test sweep preconditions."""
        with self.assertRaises(ConfigurationError):
            morris_oat(reps=0, evaluate=constant)
        with self.assertRaises(ConfigurationError):
            morris_oat(workers=0, evaluate=constant)


class TestStudies(unittest.TestCase):
    """Tests for the grid and gamma studies."""

    def test_grid_study(self):
        """Test one row per grid."""
        rows = grid_study(reps=2, evaluate=lambda cfg, seed: (float(cfg.nx * cfg.ny * cfg.nz), 1.0 + seed))
        self.assertEqual([(r["nx"], r["ny"], r["nz"]) for r in rows], [(30, 2, 2), (5, 5, 5)])
        self.assertEqual(rows[0]["avg_mse"], 120.0)
        self.assertEqual(rows[1]["min_mse"], 125.0)
        self.assertEqual(rows[0]["avg_time"], 1.5)
        self.assertEqual(rows[0]["completed_runs"], 2)

    def test_grid_study_all_failed(self):
        """Test that a grid without a valid run aborts."""
        with self.assertRaises(SensitivityError):
            grid_study(grids=((3, 3, 3),), reps=1, evaluate=lambda cfg, seed: (math.inf, 1.0))

    def test_gamma_study(self):
        """Test the gamma study on a tiny problem."""
        base = TrainConfig(nx=3, ny=3, nz=3, n_h=1, n_nh=3, n_gai=1, csgd_iters=2, fsgd_iters=2, lr_c=0.01)
        rows = gamma_study([1.0, 4.0], seeds=[0], base_cfg=base)
        self.assertEqual([r["gamma"] for r in rows], [1.0, 4.0])
        for row in rows:
            self.assertGreaterEqual(row["median_mse_d_over_gamma"], 0.0)
            self.assertTrue(math.isfinite(row["median_mse_u"]))

    def test_gamma_study_rejects_non_positive(self):
        """Test gamma validation."""
        with self.assertRaises(ConfigurationError):
            gamma_study([0.0], seeds=[0], base_cfg=TrainConfig(nx=3, ny=3, nz=3))


if __name__ == '__main__':
    unittest.main()
