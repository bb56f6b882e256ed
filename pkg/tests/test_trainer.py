#!/usr/bin/env python3
"""
Tests for the MGA-MSGD trainer and the SGD/Adam baselines.
"""
import math
import os
import sys
import unittest

import numpy as np
import torch

# Add the parent directory to the path so we can import the mgamsgd package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from mgamsgd.core.errors import ConfigurationError
from mgamsgd.core.network import flatten
from mgamsgd.core.reference import analytic_uniaxial, cube_points, mse_u, network_field
from mgamsgd.modules.trainer import TrainConfig, Trainer, train_baseline, train_mga_msgd

RUN_SLOW = os.environ.get("MGAMSGD_RUN_SLOW") == "1"


def tiny_config(**values):
    base = dict(nx=3, ny=3, nz=3, n_h=1, n_nh=4, n_gai=3, csgd_iters=3, fsgd_iters=5, lr_c=0.01, seed=11)
    base.update(values)
    return TrainConfig(**base)


class TestTrainConfig(unittest.TestCase):
    """Tests for the training configuration."""

    def test_defaults(self):
        """Test the tuned default setting."""
        cfg = TrainConfig()
        self.assertEqual((cfg.nx, cfg.ny, cfg.nz), (5, 5, 5))
        self.assertEqual((cfg.n_h, cfg.n_nh, cfg.n_gai), (2, 10, 30))
        self.assertEqual(cfg.lr_c, 0.6)
        self.assertEqual(cfg.lr_f, 1e-5)
        self.assertEqual(cfg.architecture().param_count, 180)

    def test_from_mapping(self):
        """Test notation keys and the N_x default for N_y and N_z."""
        cfg = TrainConfig.from_mapping({"N_x": 4, "N_GAi": 7, "P_sf": 0.9, "logging": {"level": "INFO"}})
        self.assertEqual((cfg.nx, cfg.ny, cfg.nz), (4, 4, 4))
        self.assertEqual(cfg.n_gai, 7)
        self.assertEqual(cfg.p_sf, 0.9)

    def test_mapping_inverse(self):
        """Test that to_mapping feeds back into from_mapping."""
        cfg = tiny_config(case="B", gamma=2.0)
        self.assertEqual(TrainConfig.from_mapping(cfg.to_mapping()), cfg)

    def test_unknown_key(self):
        """Test that unknown keys are rejected."""
        with self.assertRaises(ConfigurationError):
            TrainConfig.from_mapping({"N_q": 3})

    def test_invalid_values(self):
        """Test value validation."""
        with self.assertRaises(ConfigurationError):
            TrainConfig.from_mapping({"case": "C"})
        with self.assertRaises(ConfigurationError):
            TrainConfig(fsgd_iters=-1)
        with self.assertRaises(ConfigurationError):
            TrainConfig(p_sf=1.0).mga_config()


class TestTrainer(unittest.TestCase):
    """Tests for the MGA-MSGD pipeline."""

    def test_deterministic(self):
        """Test that one seed gives one trace."""
        _, a = train_mga_msgd(tiny_config())
        _, b = train_mga_msgd(tiny_config())
        self.assertEqual(a.mse_i, b.mse_i)
        self.assertEqual([g.mse_c for g in a.generations], [g.mse_c for g in b.generations])
        self.assertEqual([g.selected for g in a.generations], [g.selected for g in b.generations])
        self.assertEqual(a.fsgd_curve, b.fsgd_curve)

    def test_trace_shape(self):
        """Test the trace of a complete run."""
        cfg = tiny_config()
        _, trace = train_mga_msgd(cfg)
        self.assertEqual(len(trace.generations), cfg.n_gai)
        self.assertEqual(trace.fsgd_status, "completed")
        self.assertEqual(len(trace.fsgd_curve), cfg.fsgd_iters + 1)
        self.assertGreaterEqual(trace.accepted_count, 1)
        self.assertEqual(trace.summary()["generations"], cfg.n_gai)

    def test_accepted_losses_strictly_decrease(self):
        """Test that every qualified generation beats the previous one."""
        for seed in range(3):
            _, trace = train_mga_msgd(tiny_config(seed=seed, n_gai=5))
            accepted = trace.accepted_msec()
            for earlier, later in zip(accepted, accepted[1:]):
                self.assertLess(later, earlier)

    def test_best_so_far(self):
        """Test that the returned state is the lowest loss visited."""
        trainer = Trainer(tiny_config())
        params, trace = trainer.train_mga_msgd()
        self.assertLessEqual(trace.mse_min, trace.mse_i)
        self.assertLessEqual(trace.mse_min, min(trace.fsgd_curve))
        loss = float(trainer.evaluate(flatten(params)).mse)
        self.assertAlmostEqual(loss, trace.mse_min, delta=1e-12 * max(1.0, loss))

    def test_fsgd_only(self):
        """Test that zero MGA iterations run FSGD from the initialization."""
        trainer = Trainer(tiny_config(n_gai=0))
        _, trace = trainer.train_mga_msgd()
        self.assertEqual(trace.generations, [])
        self.assertIsNone(trace.mse_after_mga)
        self.assertEqual(len(trace.fsgd_curve), 6)
        self.assertAlmostEqual(trace.fsgd_curve[0], trace.mse_i, places=14)

    def test_zero_time_budget(self):
        """Test that an exhausted budget returns the initialization."""
        trainer = Trainer(tiny_config())
        params, trace = trainer.train_mga_msgd(time_budget=0.0)
        self.assertEqual(trace.generations, [])
        self.assertEqual(trace.fsgd_status, "skipped")
        self.assertEqual(trace.mse_min, trace.mse_i)
        self.assertTrue(torch.equal(flatten(params), trainer.initial_vector()))

    def test_default_setting_qualifies(self):
        """Test that the tuned setting qualifies generations and lowers the loss."""
        cfg = TrainConfig(n_gai=3, fsgd_iters=0)
        self.assertEqual((cfg.lr_c, cfg.csgd_iters, cfg.p_sf), (0.6, 50, 0.97))
        _, trace = train_mga_msgd(cfg)
        self.assertGreater(trace.accepted_count, 0)
        self.assertTrue(trace.generations[0].accepted)
        self.assertNotEqual(trace.generations[0].status, "diverged")
        self.assertIsNotNone(trace.mse_after_mga)
        self.assertLess(trace.mse_min, trace.mse_i)

    def test_clamped_case(self):
        """Test a run of the clamped-face problem."""
        _, trace = train_mga_msgd(tiny_config(case="B", n_gai=1))
        self.assertTrue(math.isfinite(trace.mse_min))
        self.assertEqual(trace.method, "mga-msgd")


class TestBaselines(unittest.TestCase):
    """Tests for the SGD and Adam baselines."""

    def test_shared_initialization(self):
        """Test that every method starts from the same loss."""
        cfg = tiny_config()
        _, mga = train_mga_msgd(cfg)
        _, sgd = train_baseline("sgd", None, 3, cfg)
        _, adam = train_baseline("adam", None, 3, cfg)
        self.assertAlmostEqual(sgd.mse_i, mga.mse_i, places=14)
        self.assertAlmostEqual(adam.mse_i, mga.mse_i, places=14)

    def test_adam_zero_learning_rate(self):
        """Test that Adam with a zero step leaves the parameters unchanged."""
        trainer = Trainer(tiny_config())
        params, trace = trainer.train_baseline("adam", lr=0.0, iters=4)
        self.assertTrue(torch.equal(flatten(params), trainer.initial_vector()))
        self.assertEqual(len(trace.fsgd_curve), 5)
        self.assertEqual(trace.mse_min, trace.mse_i)

    def test_sgd_divergence_is_recorded(self):
        """Test that a blown-up SGD run reports divergence and keeps the start."""
        trainer = Trainer(tiny_config(patience=1))
        params, trace = trainer.train_baseline("sgd", lr=1e6, iters=10)
        self.assertEqual(trace.fsgd_status, "diverged")
        self.assertEqual(trace.mse_min, trace.mse_i)
        self.assertTrue(torch.equal(flatten(params), trainer.initial_vector()))

    def test_mga_msgd_beats_baselines_at_equal_steps(self):
        """Test MGA-MSGD against SGD at the coarse rate and Adam, given as many descent steps."""
        cfg = TrainConfig(seed=0, n_gai=10, fsgd_iters=0)
        steps = cfg.n_gai * cfg.csgd_iters
        _, mga = train_mga_msgd(cfg)
        _, sgd = train_baseline("sgd", cfg.lr_c, steps, cfg)
        _, adam = train_baseline("adam", None, steps, cfg)
        self.assertEqual(sgd.fsgd_status, "diverged")
        self.assertGreater(mga.accepted_count, 0)
        self.assertLess(mga.mse_min, sgd.mse_min)
        self.assertLess(mga.mse_min, adam.mse_min)

    def test_unknown_baseline(self):
        """Test that unknown baselines are rejected."""
        with self.assertRaises(ConfigurationError):
            Trainer(tiny_config()).train_baseline("adagrad")


@unittest.skipUnless(RUN_SLOW, "set MGAMSGD_RUN_SLOW=1 to run end-to-end accuracy tests")
class TestEndToEnd(unittest.TestCase):
    """Slow accuracy runs of the default setting."""

    def test_uniaxial_accuracy(self):
        """Test the median loss, displacement error and uniqueness over five seeds."""
        losses, errors = [], []
        for seed in range(5):
            trainer = Trainer(TrainConfig(seed=seed, gamma=6.25))
            params, trace = trainer.train_mga_msgd()
            reference = analytic_uniaxial(trainer.material, trainer.config.p)
            losses.append(trace.mse_min)
            errors.append(mse_u(network_field(params, trainer.arch), reference, cube_points(10)))

            # mean lateral displacements over the training grid
            means = network_field(params, trainer.arch)(trainer.samples.interior).mean(0)
            self.assertLessEqual(abs(float(means[1])), 1e-3)
            self.assertLessEqual(abs(float(means[2])), 1e-3)
        self.assertLessEqual(float(np.median(losses)), 1e-4)
        self.assertLessEqual(float(np.median(errors)), 1e-4)

    def test_baseline_dominance(self):
        """Test that MGA-MSGD beats SGD and Adam under one wall budget."""
        finals = {"mga-msgd": [], "sgd": [], "adam": []}
        for seed in range(5):
            cfg = TrainConfig(seed=seed, fsgd_iters=10 ** 9)
            finals["mga-msgd"].append(Trainer(cfg).train_mga_msgd(time_budget=60.0)[1].mse_min)
            for kind in ("sgd", "adam"):
                finals[kind].append(Trainer(cfg).train_baseline(kind, iters=10 ** 9, time_budget=60.0)[1].mse_min)
        medians = {k: float(np.median(v)) for k, v in finals.items()}
        self.assertLess(medians["mga-msgd"], medians["sgd"])
        self.assertLess(medians["mga-msgd"], medians["adam"])


if __name__ == '__main__':
    unittest.main()
