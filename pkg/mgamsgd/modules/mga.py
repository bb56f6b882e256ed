"""
Modified Genetic Algorithm - Importance-driven mutation of network parameters.

The population is the set of learnable parameters of one network. Each
parameter is a chromosome: a sign gene followed by fixed-point magnitude bits.
Parameters are selected by tournament on their importance |dMSE/dtheta|,
mutated on three scales, spliced back and qualified by a coarse descent run.

All randomness comes from one numpy Generator, drawn in this order per
iteration: the tournaments (one draw of contenders per pick), then for every
selected parameter in selection order the global, medium and local mutation
trials (one uniform draw each, plus one gene draw when a trial fires).
"""
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np
import torch

from mgamsgd.core.diff_engine import value_and_gradient
from mgamsgd.core.errors import ConfigurationError, DomainError
from mgamsgd.core.network import DTYPE
from mgamsgd.modules.optim import DescentResult, StepControl, run_coarse_descent

logger = logging.getLogger(__name__)

# bit k is worth 2**(3 - k) for k = 0..24
N_BITS = 25
FRAC_BITS = 21
SCALE = 1 << FRAC_BITS
MAX_CODE = (1 << N_BITS) - 1
MAX_MAGNITUDE = MAX_CODE / SCALE
RESOLUTION = 1.0 / SCALE

# Gene 0 is the sign, gene 1 + k is bit k
SIGN_GENE = 0
GLOBAL_GENES = (SIGN_GENE,) + tuple(1 + k for k in range(0, 5))
MEDIUM_GENES = tuple(1 + k for k in range(5, 13))
LOCAL_GENES = tuple(1 + k for k in range(13, 25))

PICK_LIMIT = 2


@dataclass(frozen=True)
class Chromosome:
    """Binary representation of one learnable parameter."""
    sign: int
    bits: Tuple[int, ...]

    def __post_init__(self):
        if self.sign not in (0, 1) or len(self.bits) != N_BITS or any(b not in (0, 1) for b in self.bits):
            raise ConfigurationError("Chromosome needs a 0/1 sign gene and 25 binary magnitude genes")

    @property
    def genes(self) -> Tuple[int, ...]:
        return (self.sign,) + self.bits

    def flip(self, gene: int) -> "Chromosome":
        """Copy with one gene inverted."""
        genes = list(self.genes)
        genes[gene] ^= 1
        return Chromosome(sign=genes[0], bits=tuple(genes[1:]))

    def code(self) -> int:
        """Magnitude as an integer count of the resolution."""
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value


def to_codes(values) -> Tuple[np.ndarray, np.ndarray]:
    """
    Sign genes and magnitude codes of an array of values.

    Round-to-nearest (ties to even), saturating at 16 - 2**-21.

    Raises:
        DomainError: If any value is not finite
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.isfinite(values).all():
        raise DomainError("Cannot encode non-finite values")
    codes = np.minimum(np.rint(np.abs(values) * SCALE), MAX_CODE).astype(np.int64)
    return (values < 0).astype(np.int64), codes


def from_codes(signs, codes) -> np.ndarray:
    """Exact values of sign genes and magnitude codes."""
    magnitude = np.asarray(codes, dtype=np.float64) / SCALE
    return np.where(np.asarray(signs) == 1, -magnitude, magnitude)


def encode(value: float) -> Chromosome:
    """
    Round-to-nearest fixed-point encoding, saturating at 16 - 2**-21.

    Raises:
        DomainError: If value is not finite
    """
    if not math.isfinite(value):
        raise DomainError(f"Cannot encode non-finite value {value}")
    signs, codes = to_codes([value])
    code = int(codes[0])
    bits = tuple((code >> (N_BITS - 1 - k)) & 1 for k in range(N_BITS))
    return Chromosome(sign=int(signs[0]), bits=bits)


def decode(chromosome: Chromosome) -> float:
    """Exact value of the signed bit polynomial."""
    return float(from_codes([chromosome.sign], [chromosome.code()])[0])


@dataclass(frozen=True)
class MutationConfig:
    """Probabilities of a global, medium and local gene flip."""
    m_g: float = 0.3
    m_m: float = 0.3
    m_l: float = 0.3

    def __post_init__(self):
        for name in ("m_g", "m_m", "m_l"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1], got {p}")


def mutate(chromosome: Chromosome, cfg: MutationConfig, rng: np.random.Generator) -> Chromosome:
    """
    Three independent flip trials, one per scale; at most three genes change.
    """
    for probability, group in ((cfg.m_g, GLOBAL_GENES), (cfg.m_m, MEDIUM_GENES), (cfg.m_l, LOCAL_GENES)):
        if rng.random() < probability:
            chromosome = chromosome.flip(group[int(rng.integers(len(group)))])
    return chromosome


def importance(grad: torch.Tensor) -> torch.Tensor:
    """Absolute full-batch loss gradient."""
    return torch.as_tensor(grad, dtype=DTYPE).abs()


@dataclass
class SelectionState:
    """Pick history of every parameter since the last clear."""
    pick_counts: np.ndarray
    clears: int = 0

    @classmethod
    def fresh(cls, size: int) -> "SelectionState":
        return cls(pick_counts=np.zeros(size, dtype=np.int64))

    def clear(self):
        self.pick_counts[:] = 0
        self.clears += 1


def tournament_select(importance_values: Sequence[float], count: int, state: SelectionState,
                      rng: np.random.Generator, tournament_size: int = 3) -> List[int]:
    """
    Select parameters by repeated tournaments on importance.

    A parameter is exhausted once picked twice since the last clear, or once
    picked in the current call. The history is cleared only when every
    parameter is exhausted.

    Args:
        importance_values: Importance per parameter
        count: Number of distinct parameters to select
        state: Selection history, updated in place
        rng: Random generator
        tournament_size: Contenders per tournament

    Returns:
        Selected flat indices in selection order
    """
    scores = np.asarray(importance_values, dtype=np.float64)
    size = scores.shape[0]
    if count < 1:
        raise ConfigurationError(f"Selection count must be at least 1, got {count}")
    if count > size:
        raise ConfigurationError(f"Cannot select {count} of {size} parameters")
    if tournament_size < 2:
        raise ConfigurationError(f"tournament_size must be at least 2, got {tournament_size}")

    chosen: List[int] = []
    taken = np.zeros(size, dtype=bool)
    for _ in range(count):
        eligible = np.flatnonzero((state.pick_counts < PICK_LIMIT) & ~taken)
        if eligible.size == 0:
            # the rest of this call draws from everything not yet taken in it
            logger.info(f"All {size} parameters exhausted; clearing selection history")
            state.clear()
            eligible = np.flatnonzero(~taken)
        contenders = rng.choice(eligible, size=min(tournament_size, eligible.size), replace=False)
        # highest importance wins, ties go to the lowest index
        winner = int(min(contenders, key=lambda i: (-scores[i], i)))
        state.pick_counts[winner] += 1
        taken[winner] = True
        chosen.append(winner)
    return chosen


@dataclass(frozen=True)
class MgaConfig:
    """Settings of the MGA loop and its coarse qualification descent."""
    p_sf: float = 0.97
    n_gai: int = 30
    m_g: float = 0.3
    m_m: float = 0.3
    m_l: float = 0.3
    tournament_size: int = 3
    csgd_iters: int = 50
    lr_c: float = 0.6
    step_control: StepControl = field(default_factory=StepControl)

    def __post_init__(self):
        if not 0.0 < self.p_sf < 1.0:
            raise ConfigurationError(f"P_sf must lie in (0, 1), got {self.p_sf}")
        if self.n_gai < 0 or self.csgd_iters < 1:
            raise ConfigurationError("N_GAi must be >= 0 and csgd_iters >= 1")
        # validates the probabilities
        self.mutation

    @property
    def mutation(self) -> MutationConfig:
        return MutationConfig(self.m_g, self.m_m, self.m_l)

    def selected_count(self, n_params: int) -> int:
        return max(1, int(round((1.0 - self.p_sf) * n_params)))


@dataclass
class QualifyResult:
    """Verdict of the coarse-descent qualification."""
    accepted: bool
    params_out: torch.Tensor
    msec_out: float
    candidate_mse_i: float
    descent: DescentResult


def qualify(candidate: torch.Tensor, prev_msec: float, loss_fn: Callable, cfg: MgaConfig) -> QualifyResult:
    """
    Run CSGD from a candidate and accept it if it beats the previous generation.

    MSE_c is the loss the coarse descent ends on, which is the lowest it
    visited. A diverged descent is a rejection. The first call passes
    prev_msec = inf.
    """
    descent = run_coarse_descent(candidate, loss_fn, cfg.lr_c, cfg.csgd_iters, cfg.step_control)
    msec = descent.final_loss
    candidate_mse_i = descent.trace[0] if descent.trace else math.inf
    accepted = not descent.diverged and msec < prev_msec
    if accepted:
        return QualifyResult(True, descent.params, msec, candidate_mse_i, descent)
    return QualifyResult(False, torch.as_tensor(candidate, dtype=DTYPE), prev_msec, candidate_mse_i, descent)


@dataclass
class GenerationRecord:
    """One MGA iteration as it appears in the training trace."""
    iteration: int
    candidate_mse_i: float
    mse_c: float
    accepted: bool
    status: str
    wall_time: float
    selected: List[int] = field(default_factory=list)


@dataclass
class MgaIterationResult:
    generation: torch.Tensor
    msec: float
    selection_state: SelectionState
    accepted: bool
    record: GenerationRecord


def mga_iteration(generation: torch.Tensor, msec: float, selection_state: SelectionState, cfg: MgaConfig,
                  rng: np.random.Generator, loss_fn: Callable, iteration: int = 0) -> MgaIterationResult:
    """
    Select, mutate, splice and qualify once.

    Args:
        generation: Current generation as a flat vector
        msec: Its coarse-descent loss (inf before the first acceptance)
        selection_state: Pick history, updated in place
        cfg: MGA settings
        rng: Random generator
        loss_fn: Callable theta -> LossBreakdown
        iteration: Iteration number for the record

    Returns:
        The next generation and the iteration record
    """
    start = time.perf_counter()
    generation = torch.as_tensor(generation, dtype=DTYPE).detach()

    # tournament on the importance at the current generation
    _, grad = value_and_gradient(generation, loss_fn)
    selected = tournament_select(
        importance(grad).numpy(), cfg.selected_count(generation.numel()),
        selection_state, rng, cfg.tournament_size,
    )

    # mutate the selected chromosomes and splice the offspring into a copy
    candidate = generation.clone()
    mutation = cfg.mutation
    for index in selected:
        offspring = mutate(encode(float(generation[index])), mutation, rng)
        candidate[index] = decode(offspring)

    verdict = qualify(candidate, msec, loss_fn, cfg)
    record = GenerationRecord(
        iteration=iteration,
        candidate_mse_i=verdict.candidate_mse_i,
        mse_c=verdict.descent.final_loss,
        accepted=verdict.accepted,
        status=verdict.descent.status,
        wall_time=round(time.perf_counter() - start, 3),
        selected=selected,
    )
    logger.debug(
        f"MGA iteration {iteration}: candidate MSE_i {record.candidate_mse_i:.3e}, "
        f"MSE_c {record.mse_c:.3e} -> {'qualified' if verdict.accepted else 'unqualified'}"
    )
    if verdict.accepted:
        return MgaIterationResult(verdict.params_out, verdict.msec_out, selection_state, True, record)
    return MgaIterationResult(generation, msec, selection_state, False, record)
