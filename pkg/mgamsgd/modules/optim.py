"""
Optimizers - Full-batch SGD, Adam and the descent loops.

The guarded loop runs the fine (FSGD) phase of MGA-MSGD and the plain SGD/Adam
baselines. The coarse (CSGD) phase uses a large-step loop that undoes every
step on which the loss starts to grow.
"""
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Optional, Tuple

import torch
from tqdm import tqdm

from mgamsgd.core.diff_engine import value_and_gradient
from mgamsgd.core.errors import ConfigurationError, DivergenceError, EvaluationError
from mgamsgd.core.network import DTYPE

logger = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")


@dataclass
class AdamState:
    """Moment estimates of Adam; m = v = 0 at t = 0."""
    m: torch.Tensor
    v: torch.Tensor
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_bar: float = 1e-8

    @classmethod
    def fresh(cls, size: int, beta1: float = 0.9, beta2: float = 0.999, eps_bar: float = 1e-8) -> "AdamState":
        zeros = torch.zeros(size, dtype=DTYPE)
        return cls(m=zeros, v=zeros.clone(), t=0, beta1=beta1, beta2=beta2, eps_bar=eps_bar)


@dataclass(frozen=True)
class DivergenceGuard:
    """
    Break condition of a descent phase.

    Trips when the loss exceeds blowup_factor times the phase-start loss for
    ``patience`` consecutive iterations, or immediately on a non-finite loss.
    """
    blowup_factor: float = 10.0
    patience: int = 3

    def __post_init__(self):
        if not self.blowup_factor > 1:
            raise ConfigurationError(f"blowup_factor must exceed 1, got {self.blowup_factor}")
        if self.patience < 1:
            raise ConfigurationError(f"patience must be at least 1, got {self.patience}")


def _check_gradient(grad: torch.Tensor):
    if not bool(torch.isfinite(grad).all()):
        raise DivergenceError("Gradient contains non-finite entries; step refused")


def sgd_step(params: torch.Tensor, grad: torch.Tensor, lr: float) -> torch.Tensor:
    """
    theta := theta - lr * dMSE/dtheta.

    Raises:
        DivergenceError: If the gradient is not finite
    """
    if lr < 0:
        raise ConfigurationError(f"Learning rate must be non-negative, got {lr}")
    if params.shape != grad.shape:
        raise ConfigurationError(f"Parameter and gradient shapes differ: {tuple(params.shape)} vs {tuple(grad.shape)}")
    _check_gradient(grad)
    return params - lr * grad


def adam_step(params: torch.Tensor, grad: torch.Tensor, state: AdamState,
              lr: float) -> Tuple[torch.Tensor, AdamState]:
    """
    One bias-corrected Adam update.

    Args:
        params: Flat parameter vector
        grad: Gradient at params
        state: Moment estimates before the step
        lr: Learning rate

    Returns:
        Updated parameters and the new state

    Raises:
        DivergenceError: If the gradient is not finite
    """
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ConfigurationError("Adam parameters, gradient and state must share one shape")
    _check_gradient(grad)
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    t = state.t + 1
    m_bar = m / (1.0 - state.beta1 ** t)
    v_bar = v / (1.0 - state.beta2 ** t)
    updated = params - lr * m_bar / (torch.sqrt(v_bar) + state.eps_bar)
    return updated, replace(state, m=m, v=v, t=t)


@dataclass
class DescentResult:
    """
    Outcome of a descent phase.

    ``params`` is the final iterate when the phase completed and the best
    iterate when it diverged.
    """
    params: torch.Tensor
    best_params: torch.Tensor
    best_loss: float
    final_loss: float
    trace: List[float] = field(default_factory=list)
    timeline: List[Tuple[float, float]] = field(default_factory=list)
    status: str = "completed"
    iterations: int = 0
    elapsed: float = 0.0
    adam_state: Optional[AdamState] = None

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"


def _loss_value(result: Any) -> float:
    scalar = getattr(result, "mse", result)
    return float(scalar)


def run_descent(params: torch.Tensor, loss_fn: Callable[[torch.Tensor], Any], lr: float,
                max_iters: int, guard: Optional[DivergenceGuard] = None, optimizer: str = "sgd",
                adam_state: Optional[AdamState] = None, time_budget: Optional[float] = None,
                progress: bool = False, desc: str = "descent") -> DescentResult:
    """
    Full-batch gradient descent with a divergence break.

    The loss is recorded at the start point and after every step, so a
    completed run holds max_iters + 1 trace entries.

    Args:
        params: Flat start vector
        loss_fn: Callable theta -> scalar tensor or LossBreakdown
        lr: Learning rate
        max_iters: Number of steps (>= 1)
        guard: Divergence break condition
        optimizer: "sgd" or "adam"
        adam_state: Adam moments to continue from (fresh when omitted)
        time_budget: Wall-clock budget in seconds; exhausting it completes the phase
        progress: Show a tqdm progress bar
        desc: Progress bar label

    Returns:
        DescentResult with final and best-so-far parameters
    """
    if max_iters < 1:
        raise ConfigurationError(f"max_iters must be at least 1, got {max_iters}")
    if optimizer not in OPTIMIZERS:
        raise ConfigurationError(f"Unknown optimizer: {optimizer}")
    guard = guard or DivergenceGuard()

    theta = torch.as_tensor(params, dtype=DTYPE).detach().clone()
    if optimizer == "adam" and adam_state is None:
        adam_state = AdamState.fresh(theta.numel())

    start = time.perf_counter()
    best_params, best_loss = theta.clone(), math.inf
    start_loss: Optional[float] = None
    strikes = 0
    status = "completed"
    trace: List[float] = []
    timeline: List[Tuple[float, float]] = []
    steps = 0

    for it in tqdm(range(max_iters + 1), desc=desc, disable=not progress, leave=False):
        try:
            result, grad = value_and_gradient(theta, loss_fn)
        except EvaluationError as e:
            logger.warning(f"{desc}: {e} at iteration {it}; stopping")
            status = "diverged"
            break

        loss = _loss_value(result)
        trace.append(loss)
        if start_loss is None:
            start_loss = loss
        if loss < best_loss:
            best_params, best_loss = theta.clone(), loss
        timeline.append((time.perf_counter() - start, best_loss))

        strikes = strikes + 1 if loss > guard.blowup_factor * start_loss else 0
        if strikes >= guard.patience:
            logger.info(f"{desc}: loss {loss:.3e} exceeded {guard.blowup_factor}x start loss "
                        f"{start_loss:.3e} for {strikes} iterations; breaking at iteration {it}")
            status = "diverged"
            break

        if it == max_iters:
            break
        if time_budget is not None and time.perf_counter() - start >= time_budget:
            logger.debug(f"{desc}: time budget of {time_budget}s exhausted after {steps} steps")
            break

        try:
            if optimizer == "adam":
                theta, adam_state = adam_step(theta, grad, adam_state, lr)
            else:
                theta = sgd_step(theta, grad, lr)
        except DivergenceError as e:
            logger.warning(f"{desc}: {e} at iteration {it}")
            status = "diverged"
            break
        steps += 1

    elapsed = time.perf_counter() - start
    final_loss = trace[-1] if trace else math.inf
    out = best_params if status == "diverged" else theta
    logger.debug(f"{desc}: {status} after {steps} steps, best loss {best_loss:.3e}, {elapsed:.3f}s")
    return DescentResult(
        params=out.clone(),
        best_params=best_params,
        best_loss=best_loss,
        final_loss=final_loss,
        trace=trace,
        timeline=timeline,
        status=status,
        iterations=steps,
        elapsed=elapsed,
        adam_state=adam_state,
    )


@dataclass(frozen=True)
class StepControl:
    """
    Step-size control of the coarse descent.

    A step that does not lower the loss is undone and the step size shrinks by
    ``backoff``; an accepted step grows it by ``growth``, never past the nominal
    learning rate. The phase stalls once the step size falls below
    ``min_fraction`` times the nominal rate.
    """
    backoff: float = 0.5
    growth: float = 1.1
    min_fraction: float = 1e-6

    def __post_init__(self):
        if not 0.0 < self.backoff < 1.0:
            raise ConfigurationError(f"backoff must lie in (0, 1), got {self.backoff}")
        if self.growth < 1.0:
            raise ConfigurationError(f"growth must be at least 1, got {self.growth}")
        if not 0.0 < self.min_fraction < 1.0:
            raise ConfigurationError(f"min_fraction must lie in (0, 1), got {self.min_fraction}")


def run_coarse_descent(params: torch.Tensor, loss_fn: Callable[[torch.Tensor], Any], lr: float,
                       max_iters: int, control: Optional[StepControl] = None,
                       progress: bool = False, desc: str = "CSGD") -> DescentResult:
    """
    Large-step SGD that breaks off every step on which the loss starts to grow.

    Each of the max_iters trials evaluates one SGD step from the current
    iterate. Trials that lower the loss are taken; the others are undone and
    shrink the step. The trace therefore holds the start loss followed by a
    strictly decreasing sequence, and the current iterate is always the best.

    Args:
        params: Flat start vector
        loss_fn: Callable theta -> scalar tensor or LossBreakdown
        lr: Nominal (largest) learning rate
        max_iters: Number of trial steps (>= 1)
        control: Step-size control
        progress: Show a tqdm progress bar
        desc: Progress bar label

    Returns:
        DescentResult; status is "diverged" only when the start point cannot
        be evaluated or has a non-finite gradient, "stalled" when the step
        size underflowed
    """
    if max_iters < 1:
        raise ConfigurationError(f"max_iters must be at least 1, got {max_iters}")
    if lr < 0:
        raise ConfigurationError(f"Learning rate must be non-negative, got {lr}")
    control = control or StepControl()

    theta = torch.as_tensor(params, dtype=DTYPE).detach().clone()
    start = time.perf_counter()
    try:
        result, grad = value_and_gradient(theta, loss_fn)
    except EvaluationError as e:
        logger.warning(f"{desc}: {e} at the start point; stopping")
        return DescentResult(params=theta.clone(), best_params=theta, best_loss=math.inf, final_loss=math.inf,
                             status="diverged", elapsed=time.perf_counter() - start)

    loss = _loss_value(result)
    trace: List[float] = [loss]
    timeline: List[Tuple[float, float]] = [(time.perf_counter() - start, loss)]
    step = lr
    status = "completed"
    taken = undone = 0

    for it in tqdm(range(max_iters), desc=desc, disable=not progress, leave=False):
        try:
            trial = sgd_step(theta, grad, step)
        except DivergenceError as e:
            logger.warning(f"{desc}: {e} at iteration {it}")
            status = "diverged"
            break

        trial_loss, trial_grad = math.inf, None
        try:
            trial_result, trial_grad = value_and_gradient(trial, loss_fn)
            trial_loss = _loss_value(trial_result)
        except EvaluationError as e:
            logger.debug(f"{desc}: {e} at step size {step:.3e}")

        if trial_loss < loss and bool(torch.isfinite(trial_grad).all()):
            theta, loss, grad = trial, trial_loss, trial_grad
            step = min(lr, step * control.growth)
            trace.append(loss)
            taken += 1
        else:
            # divergence starts: stay at the current iterate
            step *= control.backoff
            undone += 1
            if step < control.min_fraction * lr:
                logger.debug(f"{desc}: step size {step:.3e} underflowed at iteration {it}")
                status = "stalled"
                timeline.append((time.perf_counter() - start, loss))
                break
        timeline.append((time.perf_counter() - start, loss))

    elapsed = time.perf_counter() - start
    logger.debug(f"{desc}: {status}, {taken} steps taken, {undone} undone, loss {loss:.3e}, {elapsed:.3f}s")
    return DescentResult(
        params=theta.clone(),
        best_params=theta,
        best_loss=loss,
        final_loss=loss,
        trace=trace,
        timeline=timeline,
        status=status,
        iterations=taken,
        elapsed=elapsed,
    )
