"""
Differentiation Engine - Exact spatial jets and parameter gradients.

Spatial derivatives are obtained by pushing a second-order jet (value,
gradient, the 6 unique Hessian entries) through every layer with explicit
chain rules. The jet forward pass is an ordinary torch graph, so reverse
accumulation over it yields the exact gradient of any loss built from jets
with respect to the learnable parameters.
"""
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Sequence, Tuple, Union

import torch

from mgamsgd.core.errors import DomainError, EvaluationError
from mgamsgd.core.network import (
    DTYPE,
    Architecture,
    NetworkParams,
    activation_functions,
    as_points,
)

logger = logging.getLogger(__name__)

# Storage order of the unique Hessian entries
HESS_PAIRS: Tuple[Tuple[int, int], ...] = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
_FULL_INDEX = [[0, 3, 4], [3, 1, 5], [4, 5, 2]]


def _hess_index(i: int, j: int) -> int:
    return _FULL_INDEX[i][j]


@dataclass(frozen=True)
class SecondOrderJet:
    """
    Scalar field value with exact first and second spatial derivatives.

    The Hessian is stored as its 6 unique entries in ``HESS_PAIRS`` order,
    which makes it symmetric by construction.
    """
    value: float
    grad: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    hess: Tuple[float, float, float, float, float, float] = (0.0,) * 6

    @classmethod
    def constant(cls, value: float) -> "SecondOrderJet":
        return cls(float(value))

    @classmethod
    def variable(cls, value: float, axis: int) -> "SecondOrderJet":
        """The coordinate x_axis evaluated at ``value``."""
        grad = [0.0, 0.0, 0.0]
        grad[axis] = 1.0
        return cls(float(value), tuple(grad))

    def hess_entry(self, i: int, j: int) -> float:
        return self.hess[_hess_index(i, j)]

    def hess_matrix(self) -> Tuple[Tuple[float, ...], ...]:
        return tuple(tuple(self.hess_entry(i, j) for j in range(3)) for i in range(3))

    def _coerce(self, other: Union["SecondOrderJet", float]) -> "SecondOrderJet":
        return other if isinstance(other, SecondOrderJet) else SecondOrderJet.constant(other)

    def __add__(self, other):
        other = self._coerce(other)
        return SecondOrderJet(
            self.value + other.value,
            tuple(a + b for a, b in zip(self.grad, other.grad)),
            tuple(a + b for a, b in zip(self.hess, other.hess)),
        )

    __radd__ = __add__

    def __neg__(self):
        return SecondOrderJet(-self.value, tuple(-g for g in self.grad), tuple(-h for h in self.hess))

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        other = self._coerce(other)
        f, g = self, other
        grad = tuple(f.grad[k] * g.value + f.value * g.grad[k] for k in range(3))
        hess = tuple(
            f.hess[n] * g.value + f.grad[i] * g.grad[j] + f.grad[j] * g.grad[i] + f.value * g.hess[n]
            for n, (i, j) in enumerate(HESS_PAIRS)
        )
        return SecondOrderJet(f.value * g.value, grad, hess)

    __rmul__ = __mul__

    def apply(self, fn: Callable[[float], float], d1: Callable[[float], float],
              d2: Callable[[float], float]) -> "SecondOrderJet":
        """
        Compose a scalar function with this jet.

        Args:
            fn: Outer function
            d1: Its first derivative
            d2: Its second derivative

        Returns:
            Jet of fn(self)
        """
        v, s1, s2 = fn(self.value), d1(self.value), d2(self.value)
        grad = tuple(s1 * g for g in self.grad)
        hess = tuple(
            s2 * self.grad[i] * self.grad[j] + s1 * self.hess[n]
            for n, (i, j) in enumerate(HESS_PAIRS)
        )
        return SecondOrderJet(v, grad, hess)


@dataclass(frozen=True)
class DisplacementJet:
    """Jets of the three displacement components at one point."""
    components: Tuple[SecondOrderJet, SecondOrderJet, SecondOrderJet]

    @property
    def value(self) -> Tuple[float, float, float]:
        return tuple(c.value for c in self.components)

    def grad_matrix(self) -> Tuple[Tuple[float, ...], ...]:
        """Row c holds the spatial gradient of u_c."""
        return tuple(c.grad for c in self.components)


@dataclass
class JetBatch:
    """
    Displacement jets for a batch of N points.

    Attributes:
        value: (N, 3) displacements
        grad: (N, 3, 3) with grad[n, c, j] = du_c/dx_j
        hess: (N, 3, 6) unique second derivatives in HESS_PAIRS order
    """
    value: torch.Tensor
    grad: torch.Tensor
    hess: torch.Tensor

    def hess_full(self) -> torch.Tensor:
        """(N, 3, 3, 3) Hessians, symmetric in the last two axes."""
        index = torch.tensor(_FULL_INDEX).reshape(-1)
        full = self.hess.index_select(-1, index)
        return full.reshape(*self.hess.shape[:-1], 3, 3)

    def __len__(self) -> int:
        return self.value.shape[0]

    def point(self, n: int) -> DisplacementJet:
        """Detach the jet of one point into plain floats."""
        comps = []
        for c in range(3):
            comps.append(SecondOrderJet(
                float(self.value[n, c]),
                tuple(float(v) for v in self.grad[n, c]),
                tuple(float(v) for v in self.hess[n, c]),
            ))
        return DisplacementJet(tuple(comps))


def _outer6(g: torch.Tensor) -> torch.Tensor:
    """Unique entries of g g^T for (..., 3) gradients."""
    return torch.stack([g[..., i] * g[..., j] for i, j in HESS_PAIRS], dim=-1)


def jet_batch(params: NetworkParams, arch: Architecture, points: torch.Tensor) -> JetBatch:
    """
    Propagate second-order jets through the network for a batch of points.

    Args:
        params: Network parameters (may require grad)
        arch: Network architecture
        points: (N, 3) coordinates

    Returns:
        Displacement jets of every point
    """
    params.check(arch)
    act, d1, d2 = activation_functions(arch)
    n = points.shape[0]

    a = points
    # d a / d x for the input layer is the identity
    ga = torch.eye(3, dtype=DTYPE).expand(n, 3, 3)
    ha = None
    for w, b in params.layers():
        psi = a @ w.T + b
        gpsi = torch.einsum("mk,nkj->nmj", w, ga)
        hpsi = torch.einsum("mk,nkh->nmh", w, ha) if ha is not None else None

        s1 = d1(psi).unsqueeze(-1)
        s2 = d2(psi).unsqueeze(-1)
        a = act(psi)
        ga = s1 * gpsi
        ha = s2 * _outer6(gpsi)
        if hpsi is not None:
            ha = ha + s1 * hpsi

    w_out = params.output_weights
    value = a @ w_out.T
    grad = torch.einsum("mk,nkj->nmj", w_out, ga)
    hess = torch.einsum("mk,nkh->nmh", w_out, ha)
    return JetBatch(value=value, grad=grad, hess=hess)


def jet_evaluate(params: NetworkParams, arch: Architecture, point: Sequence[float]) -> DisplacementJet:
    """
    Exact displacement, gradient and Hessian at a single point.

    Raises:
        ConfigurationError: If params do not match arch
    """
    points, _ = as_points(point)
    with torch.no_grad():
        batch = jet_batch(params, arch, points)
    return batch.point(0)


def _scalar_and_terms(result: Any) -> Tuple[torch.Tensor, Dict[str, Any]]:
    """Split a loss result into the scalar to differentiate and its named terms."""
    terms_fn = getattr(result, "terms", None)
    if callable(terms_fn):
        return result.mse, terms_fn()
    return result, {"mse": result}


def check_finite(terms: Dict[str, Any]):
    """
    Raise EvaluationError naming the first non-finite loss term.
    """
    for name, value in terms.items():
        v = float(value.detach()) if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(v):
            raise EvaluationError(f"Loss term {name} is not finite ({v})", term=name, value=v)


def value_and_gradient(theta: torch.Tensor, loss: Callable[[torch.Tensor], Any]) -> Tuple[Any, torch.Tensor]:
    """
    Evaluate a loss and its exact gradient with respect to a flat parameter vector.

    Args:
        theta: Flat parameter vector
        loss: Callable mapping a flat vector to a scalar tensor or a loss breakdown

    Returns:
        The detached loss result and the gradient vector

    Raises:
        EvaluationError: If the loss is not finite at theta
    """
    theta = torch.as_tensor(theta, dtype=DTYPE).detach().requires_grad_(True)
    result = loss(theta)
    scalar, terms = _scalar_and_terms(result)
    check_finite(terms)
    if not scalar.requires_grad:
        # the loss does not depend on the parameters at all
        grad = torch.zeros_like(theta)
    else:
        (grad,) = torch.autograd.grad(scalar, theta, allow_unused=True)
        if grad is None:
            grad = torch.zeros_like(theta)
    detached = result.detach() if hasattr(result, "detach") else result
    return detached, grad.detach()


def loss_gradient(theta: torch.Tensor, loss: Callable[[torch.Tensor], Any]) -> torch.Tensor:
    """
    Exact gradient of a scalar loss with respect to every learnable parameter.

    Args:
        theta: Flat parameter vector
        loss: Callable mapping a flat vector to a scalar tensor or a loss breakdown

    Returns:
        Flat gradient vector
    """
    _, grad = value_and_gradient(theta, loss)
    return grad


def fd_gradient(theta: torch.Tensor, loss: Callable[[torch.Tensor], Any], step: float = 1e-5) -> torch.Tensor:
    """
    Central-difference approximation of the loss gradient (test oracle).

    Args:
        theta: Flat parameter vector
        loss: Callable mapping a flat vector to a scalar tensor or a loss breakdown
        step: Finite-difference step

    Returns:
        Flat gradient approximation
    """
    if not step > 0:
        raise DomainError(f"Finite-difference step must be positive, got {step}")

    def value(x: torch.Tensor) -> float:
        scalar, terms = _scalar_and_terms(loss(x))
        check_finite(terms)
        return float(scalar)

    theta = torch.as_tensor(theta, dtype=DTYPE).detach().clone()
    grad = torch.empty_like(theta)
    with torch.no_grad():
        for k in range(theta.numel()):
            original = theta[k].item()
            theta[k] = original + step
            upper = value(theta)
            theta[k] = original - step
            lower = value(theta)
            theta[k] = original
            grad[k] = (upper - lower) / (2.0 * step)
    return grad
