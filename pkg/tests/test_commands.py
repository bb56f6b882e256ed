#!/usr/bin/env python3
"""
Tests for the command registry and the command-line entry point.
"""
import logging
import os
import sys
import tempfile
import unittest

import pandas as pd
import yaml

# Add the parent directory to the path so we can import the mgamsgd package
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import main as entry
from mgamsgd.core.errors import SensitivityError, TrainingAbortedError
from mgamsgd.core.network import Architecture, zero_params
from mgamsgd.utils.checkpoint import load_checkpoint, save_checkpoint
from mgamsgd.utils.commands import (
    CHECKPOINT_FILE, CURVE_FILE, EXIT_ABORTED, EXIT_CHECKPOINT, EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, REPORT_FILE,
    CommandRegistry,
)

TINY_CONFIG = """\
N_x: 3
N_h: 1
N_nh: 3
N_GAi: 1
csgd_iters: 2
fsgd_iters: 2
lr_c: 0.01
"""


def constant(cfg, seed):
    return 1.0, 2.0


class CommandTestCase(unittest.TestCase):

    def setUp(self):
        """Set up test fixtures."""
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = self.tmp.name
        self.config = os.path.join(self.dir, "tiny.yaml")
        with open(self.config, "w") as f:
            f.write(TINY_CONFIG)
        self.registry = CommandRegistry()

    def tearDown(self):
        """Tear down test fixtures."""
        self.tmp.cleanup()

    def path(self, *parts):
        return os.path.join(self.dir, *parts)


class TestRegistry(CommandTestCase):
    """Tests for command dispatch and exit codes."""

    def test_builtin_commands(self):
        """Test that every operation is registered."""
        self.assertEqual(
            sorted(self.registry.command_definitions),
            ["compare", "field", "gamma", "grids", "sensitivity", "train"],
        )

    def test_unknown_command(self):
        """Test that unknown commands are configuration errors."""
        self.assertEqual(self.registry.execute("nonexistent"), EXIT_CONFIG)

    def test_error_mapping(self):
        """Test the exit code of each failure kind."""
        def aborted(params):
            raise TrainingAbortedError("blew up")

        def sweep(params):
            raise SensitivityError("too few points")

        def io(params):
            raise OSError("disk full")

        self.registry.register_command("aborted", aborted)
        self.registry.register_command("sweep", sweep)
        self.registry.register_command("io", io)
        self.assertEqual(self.registry.execute("aborted"), EXIT_ABORTED)
        self.assertEqual(self.registry.execute("sweep"), EXIT_ABORTED)
        self.assertEqual(self.registry.execute("io"), EXIT_FAILURE)

    def test_missing_config(self):
        """Test that a missing configuration file exits with 2."""
        code = self.registry.execute("train", {"config": self.path("missing.yaml"), "out": self.path("run")})
        self.assertEqual(code, EXIT_CONFIG)


class TestTrainCommand(CommandTestCase):
    """Tests for the train command."""

    def test_artifacts(self):
        """Test that training writes checkpoint, report and curve."""
        out = self.path("run")
        code = self.registry.execute("train", {"config": self.config, "out": out, "seed": 3})
        self.assertEqual(code, EXIT_OK)
        for name in (CHECKPOINT_FILE, REPORT_FILE, CURVE_FILE):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

        with open(os.path.join(out, REPORT_FILE)) as f:
            report = yaml.safe_load(f)
        self.assertEqual(report["seed"], 3)
        self.assertEqual(report["config"]["N_x"], 3)
        self.assertIn("mse_u", report)
        self.assertEqual(len(report["generations"]), 1)

        curve = pd.read_csv(os.path.join(out, CURVE_FILE))
        self.assertEqual(list(curve.columns), ["iteration", "loss"])
        self.assertEqual(len(curve), 3)

        arch, _ = load_checkpoint(os.path.join(out, CHECKPOINT_FILE))
        self.assertEqual(arch, Architecture(n_hidden=1, n_neurons=3))

    def test_clamped_case_report(self):
        """Test that the clamped case reports the lateral profile."""
        with open(self.config, "a") as f:
            f.write("case: B\n")
        out = self.path("run_b")
        self.assertEqual(self.registry.execute("train", {"config": self.config, "out": out}), EXIT_OK)
        with open(os.path.join(out, REPORT_FILE)) as f:
            report = yaml.safe_load(f)
        self.assertEqual(len(report["lateral_profile"]), 10)
        self.assertIn(report["monotone_toward_dirichlet"], (True, False))
        self.assertNotIn("mse_u", report)


class TestFieldCommand(CommandTestCase):
    """Tests for the field command."""

    def setUp(self):
        """Set up test fixtures."""
        super().setUp()
        arch = Architecture(n_hidden=2, n_neurons=4)
        self.checkpoint = save_checkpoint(self.path("zero.bin"), zero_params(arch), arch)

    def test_zero_network(self):
        """Test that a zero network gives a zero field."""
        out = self.path("field.csv")
        self.assertEqual(self.registry.execute("field", {"checkpoint": self.checkpoint, "grid": 2, "out": out}),
                         EXIT_OK)
        frame = pd.read_csv(out)
        self.assertEqual(list(frame.columns), ["x", "y", "z", "ux", "uy", "uz"])
        self.assertEqual(len(frame), 8)
        self.assertTrue((frame[["ux", "uy", "uz"]] == 0.0).all().all())

    def test_error_columns(self):
        """Test the error against the uniaxial solution."""
        out = self.path("field_error.csv")
        code = self.registry.execute(
            "field", {"checkpoint": self.checkpoint, "grid": 2, "out": out, "error": True, "config": self.config},
        )
        self.assertEqual(code, EXIT_OK)
        frame = pd.read_csv(out)
        self.assertEqual(list(frame.columns)[-3:], ["eux", "euy", "euz"])
        # u_x = (p/E) x on the far face
        far = frame[frame["x"] == 1.0]
        self.assertTrue(((far["eux"] - 0.1).abs() < 1e-15).all())

    def test_corrupt_checkpoint(self):
        """Test that a corrupt checkpoint exits with 4."""
        bad = self.path("bad.bin")
        with open(bad, "wb") as f:
            f.write(b"garbage")
        self.assertEqual(self.registry.execute("field", {"checkpoint": bad, "out": self.path("f.csv")}),
                         EXIT_CHECKPOINT)

    def test_grid_too_small(self):
        """Test that a one-point grid is rejected."""
        self.assertEqual(self.registry.execute("field", {"checkpoint": self.checkpoint, "grid": 1}), EXIT_CONFIG)

    def test_missing_checkpoint_path(self):
        """Test that a field request without a checkpoint exits with 2."""
        self.assertEqual(self.registry.execute("field", {"out": self.path("f.csv")}), EXIT_CONFIG)
        self.assertEqual(self.registry.execute("field", {"checkpoint": None}), EXIT_CONFIG)
        self.assertFalse(os.path.exists(self.path("f.csv")))


class TestStudyCommands(CommandTestCase):
    """Tests for the compare, sensitivity, gamma and grids commands."""

    def test_sensitivity(self):
        """Test the sensitivity table and its samples file."""
        out = self.path("sens.csv")
        code = self.registry.execute("sensitivity", {
            "config": self.config, "levels": 2, "reps": 1, "out": out, "evaluate": constant,
        })
        self.assertEqual(code, EXIT_OK)
        table = pd.read_csv(out)
        self.assertEqual(list(table.columns), ["param", "metric", "mu", "sigma"])
        self.assertEqual(len(table), 44)
        self.assertTrue((table["mu"] == 0.0).all())
        samples = pd.read_csv(self.path("sens.samples.csv"))
        self.assertEqual(len(samples), 22)

    def test_compare(self):
        """Test the comparison summary under a tiny budget."""
        out = self.path("compare")
        code = self.registry.execute("compare", {"config": self.config, "budget_seconds": 0.05, "seeds": 1,
                                                 "out": out})
        self.assertEqual(code, EXIT_OK)
        summary = pd.read_csv(os.path.join(out, "compare_summary.csv"))
        self.assertEqual(summary["method"].tolist(), ["mga-msgd", "sgd", "adam"])
        self.assertEqual(summary["completed_runs"].tolist(), [1, 1, 1])
        curves = pd.read_csv(os.path.join(out, "compare_curves.csv"))
        self.assertEqual(sorted(set(curves["method"])), ["adam", "mga-msgd", "sgd"])

    def test_compare_rejects_bad_budget(self):
        """Test budget validation."""
        code = self.registry.execute("compare", {"config": self.config, "budget_seconds": -1.0,
                                                 "out": self.path("c")})
        self.assertEqual(code, EXIT_CONFIG)

    def test_grids(self):
        """Test the grid study table."""
        out = self.path("grids.csv")
        code = self.registry.execute("grids", {"config": self.config, "grids": [(3, 3, 3)], "reps": 1,
                                               "out": out, "evaluate": constant})
        self.assertEqual(code, EXIT_OK)
        rows = pd.read_csv(out)
        self.assertEqual(len(rows), 1)
        self.assertEqual(rows["avg_mse"].tolist(), [1.0])

    def test_gamma(self):
        """Test the gamma study table."""
        out = self.path("gamma.csv")
        code = self.registry.execute("gamma", {"config": self.config, "gammas": [1.0], "seeds": 1, "out": out})
        self.assertEqual(code, EXIT_OK)
        self.assertEqual(pd.read_csv(out)["gamma"].tolist(), [1.0])


class TestMain(CommandTestCase):
    """Tests for the command-line entry point."""

    def setUp(self):
        """Set up test fixtures."""
        super().setUp()
        self.root = logging.getLogger()
        self.saved_handlers = self.root.handlers[:]
        self.saved_level = self.root.level

    def tearDown(self):
        """Tear down test fixtures."""
        for handler in self.root.handlers[:]:
            self.root.removeHandler(handler)
        for handler in self.saved_handlers:
            self.root.addHandler(handler)
        self.root.setLevel(self.saved_level)
        super().tearDown()

    def test_train(self):
        """Test a full train invocation."""
        out = self.path("cli_run")
        code = entry.main(["train", "--config", self.config, "--out", out, "--seed", "2", "--log-level", "WARNING"])
        self.assertEqual(code, EXIT_OK)
        self.assertTrue(os.path.exists(os.path.join(out, CHECKPOINT_FILE)))

    def test_missing_config(self):
        """Test that a missing configuration file exits with 2."""
        code = entry.main(["train", "--config", self.path("missing.yaml"), "--out", self.path("x")])
        self.assertEqual(code, EXIT_CONFIG)

    def test_grid_argument(self):
        """Test grid parsing."""
        args = entry.build_parser().parse_args(["grids", "--grids", "30x2x2", "5x5x5"])
        self.assertEqual(args.grids, [(30, 2, 2), (5, 5, 5)])
        with self.assertRaises(SystemExit):
            entry.build_parser().parse_args(["grids", "--grids", "30x2"])


if __name__ == '__main__':
    unittest.main()
