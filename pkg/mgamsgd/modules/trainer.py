"""
Trainer Module - Hybrid MGA-MSGD training and the SGD/Adam baselines.

Pipeline: random initialization -> N_GAi MGA iterations with CSGD
qualification -> FSGD. Every path returns the lowest-loss state it visited.
"""
import logging
import math
import time
from dataclasses import dataclass, field, fields, replace
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
from tqdm import tqdm

from mgamsgd.core.diff_engine import check_finite
from mgamsgd.core.elasticity import LossBreakdown, Material, ProblemSpec, make_loss
from mgamsgd.core.errors import ConfigurationError, EvaluationError, TrainingAbortedError
from mgamsgd.core.network import DTYPE, Architecture, NetworkParams, flatten, init_params, unflatten
from mgamsgd.core.sampling import GridSpec, SampleSet, generate_grid
from mgamsgd.modules.mga import GenerationRecord, MgaConfig, SelectionState, mga_iteration
from mgamsgd.modules.optim import AdamState, DivergenceGuard, StepControl, run_descent

logger = logging.getLogger(__name__)

# Config notation -> TrainConfig field
NOTATION = {
    "lr_c": "lr_c",
    "lr_f": "lr_f",
    "N_GAi": "n_gai",
    "N_h": "n_h",
    "N_nh": "n_nh",
    "P_sf": "p_sf",
    "N_x": "nx",
    "N_y": "ny",
    "N_z": "nz",
    "beta_i": "beta_i",
    "M_g": "m_g",
    "M_m": "m_m",
    "M_l": "m_l",
    "gamma": "gamma",
    "case": "case",
    "E": "E",
    "nu": "nu",
    "p": "p",
    "seed": "seed",
    "fsgd_iters": "fsgd_iters",
    "csgd_iters": "csgd_iters",
    "csgd_backoff": "csgd_backoff",
    "csgd_growth": "csgd_growth",
    "tournament_size": "tournament_size",
    "normalize_stress": "normalize_stress",
    "blowup_factor": "blowup_factor",
    "patience": "patience",
    "sgd_lr": "sgd_lr",
    "adam_lr": "adam_lr",
    "adam_beta1": "adam_beta1",
    "adam_beta2": "adam_beta2",
    "adam_eps": "adam_eps",
    "num_threads": "num_threads",
}

# Keys that belong to other consumers of the same config file
PASSTHROUGH_KEYS = ("logging", "sensitivity_levels", "sensitivity_reps")


@dataclass(frozen=True)
class TrainConfig:
    """Settings of one training run; defaults are the tuned setting of the test problem."""
    lr_c: float = 0.6
    lr_f: float = 1e-5
    n_gai: int = 30
    n_h: int = 2
    n_nh: int = 10
    p_sf: float = 0.97
    nx: int = 5
    ny: int = 5
    nz: int = 5
    beta_i: float = 0.0
    m_g: float = 0.3
    m_m: float = 0.3
    m_l: float = 0.3
    gamma: Optional[float] = None
    fsgd_iters: int = 2000
    seed: int = 0
    csgd_iters: int = 50
    csgd_backoff: float = 0.5
    csgd_growth: float = 1.1
    tournament_size: int = 3
    case: str = "A"
    E: float = 1.0
    nu: float = 0.3
    p: float = -0.1
    normalize_stress: bool = True
    blowup_factor: float = 10.0
    patience: int = 3
    sgd_lr: float = 1e-2
    adam_lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    num_threads: int = 1

    def __post_init__(self):
        if self.case not in ("A", "B"):
            raise ConfigurationError(f"case must be 'A' or 'B', got {self.case}")
        if self.fsgd_iters < 0:
            raise ConfigurationError(f"fsgd_iters must be non-negative, got {self.fsgd_iters}")

    @classmethod
    def from_mapping(cls, mapping: Dict[str, Any]) -> "TrainConfig":
        """
        Build a config from flat notation keys (lr_c, N_GAi, N_h, ...).

        N_y and N_z default to N_x.

        Raises:
            ConfigurationError: On unknown keys or invalid values
        """
        mapping = dict(mapping or {})
        unknown = sorted(k for k in mapping if k not in NOTATION and k not in PASSTHROUGH_KEYS)
        if unknown:
            raise ConfigurationError(f"Unknown configuration keys: {', '.join(unknown)}")
        values = {NOTATION[k]: v for k, v in mapping.items() if k in NOTATION}
        if "nx" in values:
            values.setdefault("ny", values["nx"])
            values.setdefault("nz", values["nx"])
        try:
            return cls(**values)
        except TypeError as e:
            raise ConfigurationError(str(e))

    def to_mapping(self) -> Dict[str, Any]:
        """Flat notation keys, the inverse of from_mapping."""
        reverse = {v: k for k, v in NOTATION.items()}
        return {reverse[f.name]: getattr(self, f.name) for f in fields(self)}

    def with_values(self, **values) -> "TrainConfig":
        return replace(self, **values)

    def architecture(self) -> Architecture:
        return Architecture(n_hidden=int(self.n_h), n_neurons=int(self.n_nh))

    def grid_spec(self) -> GridSpec:
        return GridSpec(nx=int(self.nx), ny=int(self.ny), nz=int(self.nz), beta_i=float(self.beta_i))

    def material(self) -> Material:
        return Material(E=self.E, nu=self.nu)

    def problem(self) -> ProblemSpec:
        build = ProblemSpec.case_b if self.case == "B" else ProblemSpec.case_a
        return build(p=self.p, gamma=self.gamma, normalize_stress=self.normalize_stress)

    def guard(self) -> DivergenceGuard:
        return DivergenceGuard(blowup_factor=self.blowup_factor, patience=int(self.patience))

    def step_control(self) -> StepControl:
        return StepControl(backoff=self.csgd_backoff, growth=self.csgd_growth)

    def mga_config(self) -> MgaConfig:
        return MgaConfig(
            p_sf=self.p_sf, n_gai=int(self.n_gai), m_g=self.m_g, m_m=self.m_m, m_l=self.m_l,
            tournament_size=int(self.tournament_size), csgd_iters=int(self.csgd_iters),
            lr_c=self.lr_c, step_control=self.step_control(),
        )


@dataclass
class TrainingTrace:
    """
    Record of one training run.

    ``mse_min`` is the lowest loss among the states the run could return:
    the initial parameters, every accepted generation and every descent iterate.
    """
    method: str = "mga-msgd"
    seed: int = 0
    mse_i: float = math.inf
    generations: List[GenerationRecord] = field(default_factory=list)
    mse_after_mga: Optional[float] = None
    fsgd_curve: List[float] = field(default_factory=list)
    fsgd_status: str = "skipped"
    mse_min: float = math.inf
    mga_time: float = 0.0
    fsgd_time: float = 0.0
    total_time: float = 0.0
    timeline: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def accepted_count(self) -> int:
        return sum(1 for g in self.generations if g.accepted)

    def accepted_msec(self) -> List[float]:
        return [g.mse_c for g in self.generations if g.accepted]

    def summary(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "seed": self.seed,
            "mse_i": self.mse_i,
            "mse_after_mga": self.mse_after_mga,
            "mse_min": self.mse_min,
            "generations": len(self.generations),
            "accepted_generations": self.accepted_count,
            "fsgd_status": self.fsgd_status,
            "fsgd_iterations": max(len(self.fsgd_curve) - 1, 0),
            "mga_time": round(self.mga_time, 3),
            "fsgd_time": round(self.fsgd_time, 3),
            "total_time": round(self.total_time, 3),
        }


class Trainer:
    """
    Trains the displacement network of one boundary value problem.
    """

    def __init__(self, config: TrainConfig, problem: Optional[ProblemSpec] = None,
                 material: Optional[Material] = None, progress: bool = False):
        """
        Initialize the Trainer.

        Args:
            config: Training settings
            problem: Boundary value problem (built from config when omitted)
            material: Material (built from config when omitted)
            progress: Show tqdm progress bars
        """
        self.config = config
        self.problem = problem or config.problem()
        self.material = material or config.material()
        self.progress = progress
        self.arch = config.architecture()
        self.samples: SampleSet = generate_grid(config.grid_spec(), self.problem)
        self.loss_fn = make_loss(self.arch, self.samples, self.problem, self.material)
        torch.set_num_threads(max(1, int(config.num_threads)))

        logger.info(
            f"Trainer initialized: case {self.problem.case}, grid ({config.nx}, {config.ny}, {config.nz}), "
            f"N_h={config.n_h}, N_nh={config.n_nh}, gamma={self.problem.resolve_gamma(self.samples.n_weighted):g}"
        )

    def initial_vector(self) -> torch.Tensor:
        """Seeded initial parameters, shared by every training method."""
        return flatten(init_params(self.arch, self.config.seed))

    def evaluate(self, theta: torch.Tensor) -> LossBreakdown:
        """Loss breakdown at a flat parameter vector."""
        with torch.no_grad():
            result = self.loss_fn(torch.as_tensor(theta, dtype=DTYPE)).detach()
        check_finite(result.terms())
        return result

    def train_mga_msgd(self, time_budget: Optional[float] = None) -> Tuple[NetworkParams, TrainingTrace]:
        """
        Run the hybrid MGA-MSGD procedure.

        Args:
            time_budget: Optional wall-clock budget in seconds for the whole run

        Returns:
            Best-loss parameters and the training trace

        Raises:
            TrainingAbortedError: If a phase cannot evaluate the loss
        """
        cfg = self.config
        mga_cfg = cfg.mga_config()
        trace = TrainingTrace(method="mga-msgd", seed=cfg.seed)
        start = time.perf_counter()

        # Shared initialization and MSE_i
        theta = self.initial_vector()
        try:
            trace.mse_i = float(self.evaluate(theta).mse)
        except EvaluationError as e:
            raise TrainingAbortedError(f"Initial loss is not finite: {e}", trace)
        best_theta, best_loss = theta.clone(), trace.mse_i
        trace.timeline.append((time.perf_counter() - start, best_loss))
        logger.info(f"MGA-MSGD seed {cfg.seed}: MSE_i = {trace.mse_i:.6e}")

        # MGA iterations, each qualified by a coarse descent
        rng = np.random.default_rng(cfg.seed)
        state = SelectionState.fresh(theta.numel())
        generation, msec = theta, math.inf
        for j in tqdm(range(mga_cfg.n_gai), desc="MGA", disable=not self.progress):
            if time_budget is not None and time.perf_counter() - start >= time_budget:
                logger.info(f"Time budget exhausted after {j} MGA iterations")
                break
            try:
                step = mga_iteration(generation, msec, state, mga_cfg, rng, self.loss_fn, iteration=j)
            except EvaluationError as e:
                trace.mga_time = time.perf_counter() - start
                raise TrainingAbortedError(f"MGA iteration {j} failed: {e}", trace)
            trace.generations.append(step.record)
            # a qualified generation replaces the current one
            if step.accepted:
                generation, msec = step.generation, step.msec
                trace.mse_after_mga = msec
                if msec < best_loss:
                    best_theta, best_loss = generation.clone(), msec
            trace.timeline.append((time.perf_counter() - start, best_loss))
        trace.mga_time = time.perf_counter() - start
        logger.info(
            f"MGA finished: {trace.accepted_count}/{len(trace.generations)} generations qualified, "
            f"MSE_c = {trace.mse_after_mga if trace.mse_after_mga is not None else float('nan'):.6e}"
        )

        # FSGD from the last generation with whatever budget is left
        remaining = None if time_budget is None else time_budget - trace.mga_time
        if cfg.fsgd_iters > 0 and (remaining is None or remaining > 0):
            fsgd_start = time.perf_counter() - start
            descent = run_descent(
                generation, self.loss_fn, cfg.lr_f, cfg.fsgd_iters, cfg.guard(),
                time_budget=remaining, progress=self.progress, desc="FSGD",
            )
            trace.fsgd_curve = descent.trace
            trace.fsgd_status = descent.status
            trace.fsgd_time = descent.elapsed
            trace.timeline.extend((fsgd_start + t, min(best_loss, loss)) for t, loss in descent.timeline)
            if descent.best_loss < best_loss:
                best_theta, best_loss = descent.best_params, descent.best_loss
            logger.info(f"FSGD {descent.status} after {descent.iterations} iterations, best loss {descent.best_loss:.6e}")

        trace.mse_min = best_loss
        trace.total_time = time.perf_counter() - start
        return unflatten(best_theta, self.arch), trace

    def train_baseline(self, kind: str, lr: Optional[float] = None, iters: int = 2000,
                       time_budget: Optional[float] = None) -> Tuple[NetworkParams, TrainingTrace]:
        """
        Plain full-batch SGD or Adam from the shared initialization.

        Args:
            kind: "sgd" or "adam"
            lr: Learning rate (config sgd_lr/adam_lr when omitted)
            iters: Maximum number of steps
            time_budget: Optional wall-clock budget in seconds

        Returns:
            Best-so-far parameters and the trace; divergence is recorded, not raised
        """
        cfg = self.config
        if kind not in ("sgd", "adam"):
            raise ConfigurationError(f"Unknown baseline: {kind}")
        if lr is None:
            lr = cfg.sgd_lr if kind == "sgd" else cfg.adam_lr

        # same start point as MGA-MSGD, Adam moments at zero
        theta = self.initial_vector()
        adam_state = None
        if kind == "adam":
            adam_state = AdamState.fresh(theta.numel(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

        descent = run_descent(
            theta, self.loss_fn, lr, iters, cfg.guard(), optimizer=kind, adam_state=adam_state,
            time_budget=time_budget, progress=self.progress, desc=kind.upper(),
        )

        # the baseline trace stores its descent curve in the FSGD slots
        trace = TrainingTrace(method=kind, seed=cfg.seed)
        trace.mse_i = descent.trace[0] if descent.trace else math.inf
        trace.fsgd_curve = descent.trace
        trace.fsgd_status = descent.status
        trace.fsgd_time = descent.elapsed
        trace.total_time = descent.elapsed
        trace.timeline = list(descent.timeline)
        trace.mse_min = descent.best_loss
        logger.info(f"{kind.upper()} baseline seed {cfg.seed}: {descent.status}, best loss {descent.best_loss:.6e}")
        return unflatten(descent.best_params, self.arch), trace


def train_mga_msgd(cfg: TrainConfig, problem: Optional[ProblemSpec] = None, material: Optional[Material] = None,
                   time_budget: Optional[float] = None, progress: bool = False) -> Tuple[NetworkParams, TrainingTrace]:
    """Train with MGA-MSGD; see Trainer.train_mga_msgd."""
    return Trainer(cfg, problem, material, progress).train_mga_msgd(time_budget=time_budget)


def train_baseline(kind: str, lr: Optional[float], iters: int, cfg: TrainConfig,
                   problem: Optional[ProblemSpec] = None, material: Optional[Material] = None,
                   time_budget: Optional[float] = None, progress: bool = False) -> Tuple[NetworkParams, TrainingTrace]:
    """Train with plain SGD or Adam; see Trainer.train_baseline."""
    return Trainer(cfg, problem, material, progress).train_baseline(kind, lr, iters, time_budget)
