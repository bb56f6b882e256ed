"""
Export - CSV tables and human-readable run reports.
"""
import logging
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence

import pandas as pd
import yaml

from mgamsgd.modules.trainer import TrainConfig, TrainingTrace

logger = logging.getLogger(__name__)

# 17 significant digits round-trip any float64
FLOAT_FORMAT = "%.17g"


def _ensure_parent(path: str):
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_csv(rows: Iterable[Dict[str, Any]], path: str, columns: Sequence[str]) -> str:
    """
    Write rows as CSV with lossless float formatting.

    Args:
        rows: Mappings holding at least ``columns``
        path: Output file
        columns: Column order of the header

    Returns:
        The path written
    """
    _ensure_parent(path)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def curve_rows(curve: Sequence[float]) -> List[Dict[str, Any]]:
    return [{"iteration": i, "loss": float(v)} for i, v in enumerate(curve)]


@dataclass
class RunReport:
    """Summary of one training run."""
    config: Dict[str, Any]
    seed: int
    trace: Dict[str, Any]
    loss: Dict[str, float]
    mse_u: Optional[float] = None
    generations: List[Dict[str, Any]] = field(default_factory=list)
    lateral_profile: Optional[List[List[float]]] = None
    monotone_toward_dirichlet: Optional[bool] = None

    @classmethod
    def build(cls, cfg: TrainConfig, trace: TrainingTrace, loss: Dict[str, float],
              mse_u: Optional[float] = None, lateral_profile=None,
              monotone: Optional[bool] = None) -> "RunReport":
        generations = [
            {"iteration": g.iteration, "candidate_mse_i": g.candidate_mse_i, "mse_c": g.mse_c,
             "accepted": g.accepted, "status": g.status, "wall_time": g.wall_time}
            for g in trace.generations
        ]
        return cls(
            config=cfg.to_mapping(),
            seed=cfg.seed,
            trace=trace.summary(),
            loss=loss,
            mse_u=mse_u,
            generations=generations,
            lateral_profile=[list(p) for p in lateral_profile] if lateral_profile is not None else None,
            monotone_toward_dirichlet=monotone,
        )

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "seed": self.seed,
            "config": self.config,
            "trace": self.trace,
            "loss": self.loss,
        }
        if self.mse_u is not None:
            out["mse_u"] = self.mse_u
        if self.lateral_profile is not None:
            out["lateral_profile"] = self.lateral_profile
            out["monotone_toward_dirichlet"] = self.monotone_toward_dirichlet
        out["generations"] = self.generations
        return out

    def write(self, path: str) -> str:
        _ensure_parent(path)
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=False)
        logger.info(f"Wrote run report to {path}")
        return path
