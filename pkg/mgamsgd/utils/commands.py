"""
Commands - Registry and handlers of the command-line operations.

Handlers take a parameter dict, do their work and return a process exit code:
0 on success, 2 on configuration errors, 3 on aborted training or sweeps,
4 on unreadable checkpoints.
"""
import logging
import math
import os
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import torch

from mgamsgd.core.errors import (
    CheckpointError, ConfigurationError, DomainError, MgaMsgdError, SensitivityError, TrainingAbortedError,
)
from mgamsgd.core.network import flatten, forward
from mgamsgd.core.reference import (
    analytic_uniaxial, cube_points, lateral_decay_profile, monotone_toward_dirichlet, mse_u, network_field,
)
from mgamsgd.modules.sensitivity import DEFAULT_GRIDS, DEFAULT_RANGES, METRICS, gamma_study, grid_study, morris_oat
from mgamsgd.modules.trainer import TrainConfig, Trainer
from mgamsgd.utils.checkpoint import load_checkpoint, save_checkpoint
from mgamsgd.utils.config_manager import ConfigManager
from mgamsgd.utils.export import RunReport, curve_rows, write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_ABORTED = 3
EXIT_CHECKPOINT = 4

CHECKPOINT_FILE = "checkpoint.bin"
REPORT_FILE = "report.yaml"
CURVE_FILE = "fsgd_curve.csv"

COMPARE_METHODS = ("mga-msgd", "sgd", "adam")
# Budgeted runs stop on time, not on iterations
UNBOUNDED_ITERS = 10 ** 9

DEFAULT_GAMMAS = (0.625, 6.25, 62.5)

Handler = Callable[[Dict[str, Any]], int]


class CommandRegistry:
    """
    Maps command names to handlers and turns library errors into exit codes.
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """
        Initialize the CommandRegistry.

        Args:
            config: Options shared by every command (``progress``)
        """
        self.config = config or {}
        self.progress = bool(self.config.get("progress", False))
        self.command_definitions: Dict[str, Handler] = {}

        self._register_builtin_commands()

        logger.debug("CommandRegistry initialized")

    def _register_builtin_commands(self):
        """Register built-in commands."""
        self.register_command("train", self._handle_train)
        self.register_command("compare", self._handle_compare)
        self.register_command("field", self._handle_field)
        self.register_command("sensitivity", self._handle_sensitivity)
        self.register_command("gamma", self._handle_gamma)
        self.register_command("grids", self._handle_grids)

    def register_command(self, name: str, handler: Handler):
        """
        Register a command with its handler.

        Args:
            name: Name of the command
            handler: Callable params -> exit code
        """
        self.command_definitions[name] = handler
        logger.debug(f"Registered command handler for: {name}")

    def execute(self, name: str, params: Optional[Dict[str, Any]] = None) -> int:
        """
        Run a command and map its failure to an exit code.

        Args:
            name: Name of the command
            params: Parameters for the command

        Returns:
            Process exit code
        """
        handler = self.command_definitions.get(name)
        if handler is None:
            logger.error(f"Unknown command: {name}")
            return EXIT_CONFIG

        try:
            return handler(params or {})
        except (ConfigurationError, DomainError) as e:
            logger.error(f"Configuration error: {e}")
            return EXIT_CONFIG
        except (TrainingAbortedError, SensitivityError) as e:
            logger.error(f"{name} aborted: {e}")
            return EXIT_ABORTED
        except CheckpointError as e:
            logger.error(f"Checkpoint error: {e}")
            return EXIT_CHECKPOINT
        except MgaMsgdError as e:
            logger.error(f"{name} failed: {e}")
            return EXIT_ABORTED
        except OSError as e:
            logger.error(f"I/O error in {name}: {e}")
            return EXIT_FAILURE

    # Helpers

    @staticmethod
    def _train_config(params: Dict[str, Any]) -> TrainConfig:
        cfg = ConfigManager(params.get("config")).train_config()
        if params.get("seed") is not None:
            cfg = cfg.with_values(seed=int(params["seed"]))
        return cfg

    @staticmethod
    def _sweep_setting(params: Dict[str, Any], key: str, default: int) -> int:
        if params.get(key) is not None:
            return int(params[key])
        return int(ConfigManager(params.get("config")).get(f"sensitivity_{key}", default))

    # Built-in command handlers

    def _handle_train(self, params: Dict[str, Any]) -> int:
        """Train one network and write checkpoint, report and FSGD curve."""
        cfg = self._train_config(params)
        out = params.get("out") or "runs/train"
        os.makedirs(out, exist_ok=True)

        trainer = Trainer(cfg, progress=self.progress)
        net, trace = trainer.train_mga_msgd(time_budget=params.get("time_budget"))
        loss = trainer.evaluate(flatten(net)).as_floats()

        error, profile, monotone = None, None, None
        if trainer.problem.case == "A":
            reference = analytic_uniaxial(trainer.material, cfg.p)
            error = mse_u(network_field(net, trainer.arch), reference, cube_points(10))
        else:
            profile = lateral_decay_profile(net, trainer.arch, n=10)
            monotone = monotone_toward_dirichlet(profile)

        save_checkpoint(os.path.join(out, CHECKPOINT_FILE), net, trainer.arch)
        RunReport.build(cfg, trace, loss, error, profile, monotone).write(os.path.join(out, REPORT_FILE))
        write_csv(curve_rows(trace.fsgd_curve), os.path.join(out, CURVE_FILE), ["iteration", "loss"])

        logger.info(f"Training finished: mse {loss['mse']:.6e}" + (f", mse_u {error:.6e}" if error is not None else ""))
        return EXIT_OK

    def _handle_compare(self, params: Dict[str, Any]) -> int:
        """Run MGA-MSGD, SGD and Adam under one wall budget per seed."""
        budget = float(params.get("budget_seconds") or 60.0)
        seeds = int(params.get("seeds") or 1)
        if budget <= 0 or seeds < 1:
            raise ConfigurationError(f"compare needs a positive budget and at least one seed, got {budget}, {seeds}")
        cfg = self._train_config(params)
        out = params.get("out") or "runs/compare"
        os.makedirs(out, exist_ok=True)

        curves: List[Dict[str, Any]] = []
        finals: Dict[str, List[float]] = {m: [] for m in COMPARE_METHODS}
        failures: Dict[str, int] = {m: 0 for m in COMPARE_METHODS}
        # every method gets the same seed, start point and wall budget
        for seed in range(cfg.seed, cfg.seed + seeds):
            # the budget, not the iteration count, ends every run
            run_cfg = cfg.with_values(seed=seed, fsgd_iters=UNBOUNDED_ITERS)
            for method in COMPARE_METHODS:
                trainer = Trainer(run_cfg, progress=self.progress)
                try:
                    if method == "mga-msgd":
                        _, trace = trainer.train_mga_msgd(time_budget=budget)
                    else:
                        _, trace = trainer.train_baseline(method, iters=UNBOUNDED_ITERS, time_budget=budget)
                except MgaMsgdError as e:
                    # a failed run is counted and the sweep goes on
                    logger.warning(f"{method} failed for seed {seed}: {e}")
                    failures[method] += 1
                    continue
                finals[method].append(trace.mse_min)
                curves.extend({"method": method, "seed": seed, "time": t, "loss": v} for t, v in trace.timeline)

        # median final loss per method over the seeds that finished
        summary = [
            {
                "method": m,
                "median_final_loss": float(np.median(finals[m])) if finals[m] else math.nan,
                "completed_runs": len(finals[m]),
                "failed_runs": failures[m],
            }
            for m in COMPARE_METHODS
        ]
        write_csv(curves, os.path.join(out, "compare_curves.csv"), ["method", "seed", "time", "loss"])
        write_csv(summary, os.path.join(out, "compare_summary.csv"),
                  ["method", "median_final_loss", "completed_runs", "failed_runs"])

        if not any(finals.values()):
            logger.error("Every method failed")
            return EXIT_ABORTED
        return EXIT_OK

    def _handle_field(self, params: Dict[str, Any]) -> int:
        """Evaluate a checkpoint on an N^3 grid."""
        if not params.get("checkpoint"):
            raise ConfigurationError("field needs a checkpoint path")
        arch, net = load_checkpoint(params["checkpoint"])
        n = int(params.get("grid") or 10)
        if n < 2:
            raise ConfigurationError(f"Field grid needs at least 2 points per axis, got {n}")
        points = cube_points(n)
        with torch.no_grad():
            u = forward(net, arch, points)

        columns = ["x", "y", "z", "ux", "uy", "uz"]
        table = torch.cat([points, u], dim=-1)
        # displacement error against the uniaxial solution on request
        if params.get("error"):
            cfg = self._train_config(params)
            reference = analytic_uniaxial(cfg.material(), cfg.p)(points)
            table = torch.cat([table, u - reference], dim=-1)
            columns += ["eux", "euy", "euz"]

        rows = [dict(zip(columns, row)) for row in table.tolist()]
        write_csv(rows, params.get("out") or "field.csv", columns)
        return EXIT_OK

    def _handle_sensitivity(self, params: Dict[str, Any]) -> int:
        """Morris one-at-a-time sweep over the framework parameters."""
        levels = self._sweep_setting(params, "levels", 4)
        reps = self._sweep_setting(params, "reps", 3)
        cfg = self._train_config(params)
        out = params.get("out") or "sensitivity.csv"

        result = morris_oat(
            params.get("ranges") or DEFAULT_RANGES, levels=levels, reps=reps, seed=cfg.seed,
            evaluate=params.get("evaluate"), base_cfg=cfg, workers=int(params.get("workers") or 1),
            progress=self.progress,
        )
        write_csv(result.table(), out, ["param", "metric", "mu", "sigma"])
        write_csv(result.sample_rows(), os.path.splitext(out)[0] + ".samples.csv",
                  ["param", "level", "value", "avg_mse", "min_mse", "avg_time", "min_time"])
        logger.info(f"Sensitivity table: {len(result.params)} parameters x {len(METRICS)} metrics, "
                    f"{result.missing} missing sample(s)")
        return EXIT_OK

    def _handle_gamma(self, params: Dict[str, Any]) -> int:
        """Median boundary and total errors across Dirichlet weights."""
        cfg = self._train_config(params)
        seeds = range(cfg.seed, cfg.seed + int(params.get("seeds") or 3))
        rows = gamma_study(params.get("gammas") or DEFAULT_GAMMAS, seeds, cfg)
        write_csv(rows, params.get("out") or "gamma.csv",
                  ["gamma", "median_mse_d_over_gamma", "median_mse", "median_mse_u"])
        return EXIT_OK

    def _handle_grids(self, params: Dict[str, Any]) -> int:
        """Average and minimum error and time per sampling grid."""
        cfg = self._train_config(params)
        rows = grid_study(params.get("grids") or DEFAULT_GRIDS, int(params.get("reps") or 3), cfg, seed=cfg.seed,
                          evaluate=params.get("evaluate"))
        write_csv(rows, params.get("out") or "grids.csv",
                  ["nx", "ny", "nz", "avg_mse", "min_mse", "avg_time", "min_time", "completed_runs"])
        return EXIT_OK
