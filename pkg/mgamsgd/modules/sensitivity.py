"""
Sensitivity Module - One-at-a-time Morris screening of the framework parameters.

Each parameter is swept across its range while every other parameter sits at
its base value. Every sweep point is trained ``reps`` times and summarized by
four metrics: average MSE, minimum MSE, average time and minimum time. The
spread of each metric over the sweep is reported as mu and sigma.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from mgamsgd.core.errors import ConfigurationError, DomainError, MgaMsgdError, SensitivityError
from mgamsgd.core.network import flatten
from mgamsgd.core.reference import analytic_uniaxial, cube_points, mse_u, network_field
from mgamsgd.modules.trainer import NOTATION, TrainConfig, Trainer

logger = logging.getLogger(__name__)

METRICS = ("average_mse", "minimum_mse", "average_time", "minimum_time")

# Sweeps N_y = N_z = N_x - value
GRID_DIFFERENCE = "N_x-N_y"

Evaluator = Callable[[TrainConfig, int], Tuple[float, float]]


def mu(values: Sequence[float]) -> float:
    """sum |x - mean| / (n - 1)."""
    x = _as_samples(values)
    return float(np.abs(x - x.mean()).sum() / (x.size - 1))


def sigma(values: Sequence[float]) -> float:
    """sqrt(sum (x - mean)^2 / (n - 1))."""
    x = _as_samples(values)
    return float(math.sqrt(((x - x.mean()) ** 2).sum() / (x.size - 1)))


def _as_samples(values: Sequence[float]) -> np.ndarray:
    x = np.asarray(list(values), dtype=np.float64)
    if x.size < 2:
        raise DomainError(f"mu and sigma need at least 2 values, got {x.size}")
    return x


@dataclass(frozen=True)
class ParamRange:
    """Uniform range of one swept parameter and the value it holds otherwise."""
    name: str
    lo: float
    hi: float
    base: float
    integer: bool = False

    def __post_init__(self):
        if self.name not in NOTATION and self.name != GRID_DIFFERENCE:
            raise ConfigurationError(f"Unknown sweep parameter: {self.name}")
        if not self.lo <= self.base <= self.hi:
            raise ConfigurationError(f"Base value {self.base} of {self.name} lies outside [{self.lo}, {self.hi}]")

    def levels(self, count: int) -> List[float]:
        """Equispaced sweep points; integer ranges are rounded and deduplicated."""
        if count < 2:
            raise ConfigurationError(f"Need at least 2 levels, got {count}")
        points = np.linspace(self.lo, self.hi, count)
        if not self.integer:
            return [float(v) for v in points]
        out: List[float] = []
        for v in points:
            level = float(int(round(v)))
            if level not in out:
                out.append(level)
        return out


# Framework parameters, their ranges and base values
DEFAULT_RANGES = (
    ParamRange("lr_c", 0.5, 1.0, 0.7),
    ParamRange("N_GAi", 10, 60, 30, integer=True),
    ParamRange("N_h", 2, 6, 3, integer=True),
    ParamRange("N_nh", 3, 20, 10, integer=True),
    ParamRange("P_sf", 0.9, 0.995, 0.98),
    ParamRange("N_x", 5, 14, 10, integer=True),
    ParamRange(GRID_DIFFERENCE, 0, 8, 0, integer=True),
    ParamRange("beta_i", 0.0, 2.0, 0.0),
    ParamRange("M_g", 0.1, 0.5, 0.1),
    ParamRange("M_m", 0.1, 0.5, 0.1),
    ParamRange("M_l", 0.1, 0.5, 0.1),
)


def apply_values(cfg: TrainConfig, values: Dict[str, float]) -> TrainConfig:
    """
    Set parameters given by notation on a config.

    The grid difference is applied after N_x so it always refers to the final N_x.
    """
    updates = {}
    for name, value in values.items():
        if name == GRID_DIFFERENCE:
            continue
        target = NOTATION[name]
        updates[target] = int(round(value)) if isinstance(getattr(cfg, target), int) else float(value)
    if "nx" in updates:
        updates.setdefault("ny", updates["nx"])
        updates.setdefault("nz", updates["nx"])
    cfg = cfg.with_values(**updates)
    if GRID_DIFFERENCE in values:
        reduced = cfg.nx - int(round(values[GRID_DIFFERENCE]))
        if reduced < 2:
            raise ConfigurationError(f"N_x - N_y leaves fewer than 2 points per axis ({reduced})")
        cfg = cfg.with_values(ny=reduced, nz=reduced)
    return cfg


def train_and_time(cfg: TrainConfig, seed: int) -> Tuple[float, float]:
    """Default evaluator: one MGA-MSGD run, returning (mse_min, total time)."""
    _, trace = Trainer(cfg.with_values(seed=seed)).train_mga_msgd()
    return trace.mse_min, trace.total_time


def _run_sample(evaluate: Evaluator, cfg: TrainConfig, seed: int) -> Optional[Tuple[float, float]]:
    try:
        mse, seconds = evaluate(cfg, seed)
    except MgaMsgdError as e:
        logger.warning(f"Sweep run with seed {seed} failed: {e}")
        return None
    if not math.isfinite(mse):
        return None
    return float(mse), float(seconds)


@dataclass
class PointSample:
    """Metrics of one sweep point, aggregated over its replications."""
    param: str
    level: int
    value: float
    avg_mse: float
    min_mse: float
    avg_time: float
    min_time: float
    completed: int

    def metric(self, name: str) -> float:
        return {
            "average_mse": self.avg_mse,
            "minimum_mse": self.min_mse,
            "average_time": self.avg_time,
            "minimum_time": self.min_time,
        }[name]


@dataclass
class SensitivityResult:
    """mu and sigma per parameter and metric, with the raw sweep samples."""
    stats: Dict[Tuple[str, str], Tuple[float, float]] = field(default_factory=dict)
    samples: List[PointSample] = field(default_factory=list)
    reps: int = 0
    missing: int = 0
    params: List[str] = field(default_factory=list)

    def table(self) -> List[Dict[str, object]]:
        """One row per parameter and metric, in sweep order."""
        return [
            {"param": p, "metric": m, "mu": self.stats[(p, m)][0], "sigma": self.stats[(p, m)][1]}
            for p in self.params for m in METRICS
        ]

    def sample_rows(self) -> List[Dict[str, object]]:
        return [
            {"param": s.param, "level": s.level, "value": s.value, "avg_mse": s.avg_mse,
             "min_mse": s.min_mse, "avg_time": s.avg_time, "min_time": s.min_time}
            for s in self.samples
        ]


def morris_oat(ranges: Sequence[ParamRange] = DEFAULT_RANGES, levels: int = 4, reps: int = 3, seed: int = 0,
               evaluate: Optional[Evaluator] = None, base_cfg: Optional[TrainConfig] = None,
               workers: int = 1, progress: bool = False) -> SensitivityResult:
    """
    One-at-a-time sweep over every range.

    Args:
        ranges: Parameters to sweep
        levels: Sweep points per parameter (>= 2)
        reps: Seeded runs per sweep point (>= 1); run r uses seed + r
        seed: Base seed
        evaluate: Callable (config, seed) -> (mse, seconds); trains by default
        base_cfg: Settings of everything outside the sweep
        workers: Worker processes; results do not depend on the count
        progress: Show a tqdm progress bar

    Returns:
        SensitivityResult

    Raises:
        SensitivityError: If a parameter keeps fewer than 2 valid sweep points
    """
    if reps < 1:
        raise ConfigurationError(f"reps must be at least 1, got {reps}")
    if workers < 1:
        raise ConfigurationError(f"workers must be at least 1, got {workers}")
    evaluate = evaluate or train_and_time
    base_cfg = base_cfg or TrainConfig()
    bases = {r.name: r.base for r in ranges}

    jobs: Dict[Tuple[str, int, int], Tuple[TrainConfig, int]] = {}
    sweep: Dict[str, List[float]] = {}
    for r in ranges:
        sweep[r.name] = r.levels(levels)
        for li, value in enumerate(sweep[r.name]):
            cfg = apply_values(base_cfg, {**bases, r.name: value})
            for rep in range(reps):
                jobs[(r.name, li, rep)] = (cfg, seed + rep)

    logger.info(f"Morris sweep: {len(ranges)} parameters, {len(jobs)} training runs, {workers} worker(s)")
    outcomes: Dict[Tuple[str, int, int], Optional[Tuple[float, float]]] = {}
    if workers == 1:
        for key in tqdm(jobs, desc="sensitivity", disable=not progress):
            outcomes[key] = _run_sample(evaluate, *jobs[key])
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(_run_sample, evaluate, *job) for key, job in jobs.items()}
            for key in tqdm(futures, desc="sensitivity", disable=not progress):
                outcomes[key] = futures[key].result()

    result = SensitivityResult(reps=reps, params=[r.name for r in ranges])
    for r in ranges:
        points: List[PointSample] = []
        for li, value in enumerate(sweep[r.name]):
            runs = [outcomes[(r.name, li, rep)] for rep in range(reps)]
            done = [o for o in runs if o is not None]
            result.missing += len(runs) - len(done)
            if not done:
                logger.warning(f"{r.name} = {value:g}: every replication failed; level excluded")
                continue
            mses = [m for m, _ in done]
            times = [t for _, t in done]
            points.append(PointSample(
                param=r.name, level=li, value=value,
                avg_mse=float(np.mean(mses)), min_mse=min(mses),
                avg_time=float(np.mean(times)), min_time=min(times), completed=len(done),
            ))
        if len(points) < 2:
            raise SensitivityError(f"{r.name}: only {len(points)} valid sweep point(s) remain")
        result.samples.extend(points)
        for m in METRICS:
            values = [p.metric(m) for p in points]
            result.stats[(r.name, m)] = (mu(values), sigma(values))

    if result.missing:
        logger.warning(f"Morris sweep finished with {result.missing} missing sample(s)")
    return result


def _final_metrics(cfg: TrainConfig) -> Dict[str, float]:
    trainer = Trainer(cfg)
    params, trace = trainer.train_mga_msgd()
    breakdown = trainer.evaluate(flatten(params)).as_floats()
    out = {"mse": trace.mse_min, "mse_d": breakdown["mse_d"], "time": trace.total_time, "mse_u": math.nan}
    if trainer.problem.case == "A":
        reference = analytic_uniaxial(trainer.material, cfg.p)
        out["mse_u"] = mse_u(network_field(params, trainer.arch), reference, cube_points(10))
    return out


def gamma_study(gammas: Iterable[float], seeds: Iterable[int],
                base_cfg: Optional[TrainConfig] = None) -> List[Dict[str, float]]:
    """
    Effect of the Dirichlet weight gamma on the boundary and total error.

    Returns:
        One row per gamma with median mse_d / gamma, mse and mse_u over seeds
    """
    base_cfg = base_cfg or TrainConfig()
    seeds = list(seeds)
    if not seeds:
        raise ConfigurationError("gamma_study needs at least one seed")
    rows = []
    for gamma in gammas:
        if not gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {gamma}")
        runs = [_final_metrics(base_cfg.with_values(gamma=float(gamma), seed=s)) for s in seeds]
        rows.append({
            "gamma": float(gamma),
            "median_mse_d_over_gamma": float(np.median([r["mse_d"] / gamma for r in runs])),
            "median_mse": float(np.median([r["mse"] for r in runs])),
            "median_mse_u": float(np.median([r["mse_u"] for r in runs])),
        })
        logger.info(f"gamma = {gamma:g}: median mse {rows[-1]['median_mse']:.3e}")
    return rows


DEFAULT_GRIDS = ((30, 2, 2), (5, 5, 5))


def grid_study(grids: Iterable[Tuple[int, int, int]] = DEFAULT_GRIDS, reps: int = 3,
               base_cfg: Optional[TrainConfig] = None, seed: int = 0,
               evaluate: Optional[Evaluator] = None) -> List[Dict[str, float]]:
    """
    Compare sampling distributions at a similar point count.

    Returns:
        One row per grid with average/minimum MSE and time over reps
    """
    if reps < 1:
        raise ConfigurationError(f"reps must be at least 1, got {reps}")
    base_cfg = base_cfg or TrainConfig()
    evaluate = evaluate or train_and_time
    rows = []
    for nx, ny, nz in grids:
        cfg = base_cfg.with_values(nx=int(nx), ny=int(ny), nz=int(nz))
        done = [o for o in (_run_sample(evaluate, cfg, seed + r) for r in range(reps)) if o is not None]
        if not done:
            raise SensitivityError(f"Every run on grid ({nx}, {ny}, {nz}) failed")
        mses = [m for m, _ in done]
        times = [t for _, t in done]
        rows.append({
            "nx": nx, "ny": ny, "nz": nz,
            "avg_mse": float(np.mean(mses)), "min_mse": min(mses),
            "avg_time": float(np.mean(times)), "min_time": min(times),
            "completed_runs": len(done),
        })
    return rows
