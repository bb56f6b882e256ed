"""
Network - Feed-forward ansatz mapping coordinates to displacements.

The hidden layers compute psi = W a + b followed by ELU; the output layer is a
bias-free linear map onto the three displacement components.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, Union

import torch

from mgamsgd.core.errors import ConfigurationError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

Real = Union[float, torch.Tensor]

ACTIVATIONS = ("elu", "identity")


@dataclass(frozen=True)
class Architecture:
    """Shape of the displacement network."""
    n_hidden: int
    n_neurons: int
    n_inputs: int = 3
    n_outputs: int = 3
    alpha: float = 1.0
    # "identity" is a verification aid only; training always uses ELU
    activation: str = "elu"

    def __post_init__(self):
        if int(self.n_hidden) < 1 or int(self.n_neurons) < 1:
            raise ConfigurationError(
                f"Architecture needs n_hidden >= 1 and n_neurons >= 1, got ({self.n_hidden}, {self.n_neurons})"
            )
        if self.n_inputs != 3 or self.n_outputs != 3:
            raise ConfigurationError("Architecture maps 3 coordinates onto 3 displacement components")
        if self.alpha != 1.0:
            raise ConfigurationError(f"ELU coefficient must be 1, got {self.alpha}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"Unknown activation: {self.activation}")

    def layer_shapes(self) -> List[Tuple[int, int]]:
        """Weight shapes of every layer, output layer last."""
        shapes = [(self.n_neurons, self.n_inputs)]
        shapes += [(self.n_neurons, self.n_neurons)] * (self.n_hidden - 1)
        shapes.append((self.n_outputs, self.n_neurons))
        return shapes


def param_count(arch: Architecture) -> int:
    """Number of learnable parameters of an architecture."""
    hidden = arch.n_neurons * arch.n_inputs + arch.n_neurons
    hidden += (arch.n_hidden - 1) * (arch.n_neurons * arch.n_neurons + arch.n_neurons)
    return hidden + arch.n_outputs * arch.n_neurons


@dataclass
class NetworkParams:
    """Layer weights and biases; the output layer has no bias."""
    hidden_weights: List[torch.Tensor]
    hidden_biases: List[torch.Tensor]
    output_weights: torch.Tensor

    def check(self, arch: Architecture):
        """
        Verify that the tensor shapes match an architecture.

        Args:
            arch: Architecture to check against

        Raises:
            ConfigurationError: On any shape mismatch
        """
        shapes = arch.layer_shapes()
        if len(self.hidden_weights) != arch.n_hidden or len(self.hidden_biases) != arch.n_hidden:
            raise ConfigurationError(
                f"Expected {arch.n_hidden} hidden layers, got {len(self.hidden_weights)} weights "
                f"and {len(self.hidden_biases)} biases"
            )
        for i, (w, b) in enumerate(zip(self.hidden_weights, self.hidden_biases)):
            if tuple(w.shape) != shapes[i] or tuple(b.shape) != (shapes[i][0],):
                raise ConfigurationError(
                    f"Hidden layer {i + 1} has shapes {tuple(w.shape)}/{tuple(b.shape)}, expected {shapes[i]}"
                )
        if tuple(self.output_weights.shape) != shapes[-1]:
            raise ConfigurationError(
                f"Output layer has shape {tuple(self.output_weights.shape)}, expected {shapes[-1]}"
            )

    def layers(self) -> List[Tuple[torch.Tensor, torch.Tensor]]:
        """Hidden (weight, bias) pairs in forward order."""
        return list(zip(self.hidden_weights, self.hidden_biases))


def flatten(params: NetworkParams) -> torch.Tensor:
    """
    Concatenate all parameters in canonical order.

    Layer by layer, each weight matrix row-major followed by its bias; the
    output weights come last.
    """
    pieces = []
    for w, b in params.layers():
        pieces.append(w.reshape(-1))
        pieces.append(b.reshape(-1))
    pieces.append(params.output_weights.reshape(-1))
    return torch.cat(pieces)


def unflatten(vector: torch.Tensor, arch: Architecture) -> NetworkParams:
    """
    Split a flat parameter vector into layer tensors.

    The returned tensors are views, so gradients flow back to ``vector``.

    Args:
        vector: Flat parameter vector in canonical order
        arch: Architecture describing the layer shapes

    Returns:
        NetworkParams built from views of ``vector``
    """
    vector = torch.as_tensor(vector, dtype=DTYPE)
    expected = param_count(arch)
    if vector.dim() != 1 or vector.numel() != expected:
        raise ConfigurationError(f"Flat parameter vector has {vector.numel()} entries, expected {expected}")

    offset = 0
    weights, biases = [], []
    shapes = arch.layer_shapes()
    for rows, cols in shapes[:-1]:
        weights.append(vector[offset:offset + rows * cols].view(rows, cols))
        offset += rows * cols
        biases.append(vector[offset:offset + rows])
        offset += rows
    rows, cols = shapes[-1]
    output = vector[offset:offset + rows * cols].view(rows, cols)
    return NetworkParams(hidden_weights=weights, hidden_biases=biases, output_weights=output)


def init_params(arch: Architecture, seed: int) -> NetworkParams:
    """
    Draw every weight and bias independently from U[-1, 1].

    Args:
        arch: Network architecture
        seed: Seed of the deterministic generator

    Returns:
        Freshly initialized parameters
    """
    generator = torch.Generator().manual_seed(int(seed))
    flat = torch.rand(param_count(arch), generator=generator, dtype=DTYPE) * 2.0 - 1.0
    logger.debug(f"Initialized {flat.numel()} parameters with seed {seed}")
    return unflatten(flat, arch)


def zero_params(arch: Architecture) -> NetworkParams:
    """All-zero parameters of an architecture."""
    return unflatten(torch.zeros(param_count(arch), dtype=DTYPE), arch)


# ELU with alpha = 1 and its first two derivatives. Floats go through math,
# tensors through torch; exp only sees non-positive arguments so that the
# unselected branch never overflows.

def elu(x: Real) -> Real:
    """max(0, x) + min(0, exp(x) - 1)."""
    if isinstance(x, torch.Tensor):
        return torch.where(x > 0, x, torch.expm1(torch.clamp(x, max=0.0)))
    return x if x > 0 else math.expm1(x)


def elu_d1(x: Real) -> Real:
    """1 for x > 0, exp(x) otherwise (1 at 0)."""
    if isinstance(x, torch.Tensor):
        return torch.where(x > 0, torch.ones_like(x), torch.exp(torch.clamp(x, max=0.0)))
    return 1.0 if x > 0 else math.exp(x)


def elu_d2(x: Real) -> Real:
    """0 for x >= 0 (right limit at the kink), exp(x) otherwise."""
    if isinstance(x, torch.Tensor):
        return torch.where(x >= 0, torch.zeros_like(x), torch.exp(torch.clamp(x, max=0.0)))
    return 0.0 if x >= 0 else math.exp(x)


def _identity_d1(x: torch.Tensor) -> torch.Tensor:
    return torch.ones_like(x)


def _identity_d2(x: torch.Tensor) -> torch.Tensor:
    return torch.zeros_like(x)


def activation_functions(arch: Architecture) -> Tuple[Callable, Callable, Callable]:
    """Activation value, first and second derivative for an architecture."""
    if arch.activation == "identity":
        return (lambda x: x), _identity_d1, _identity_d2
    return elu, elu_d1, elu_d2


def as_points(point: Union[Sequence[float], torch.Tensor]) -> Tuple[torch.Tensor, bool]:
    """
    Coerce a single point or a batch of points to an (N, 3) tensor.

    Returns:
        The batch and whether the input was a single point
    """
    points = torch.as_tensor(point, dtype=DTYPE)
    single = points.dim() == 1
    if single:
        points = points.unsqueeze(0)
    if points.dim() != 2 or points.shape[1] != 3:
        raise ConfigurationError(f"Points must have shape (3,) or (N, 3), got {tuple(points.shape)}")
    return points, single


def preactivations(params: NetworkParams, arch: Architecture, points: torch.Tensor) -> List[torch.Tensor]:
    """
    Pre-activations psi of every hidden layer for a batch of points.

    Args:
        params: Network parameters
        arch: Network architecture
        points: (N, 3) batch of coordinates

    Returns:
        One (N, n_neurons) tensor per hidden layer
    """
    params.check(arch)
    act, _, _ = activation_functions(arch)
    a = points
    psis = []
    for w, b in params.layers():
        psi = a @ w.T + b
        psis.append(psi)
        a = act(psi)
    return psis


def forward(params: NetworkParams, arch: Architecture, point) -> torch.Tensor:
    """
    Displacement at one point (shape (3,)) or a batch of points (shape (N, 3)).
    """
    points, single = as_points(point)
    act, _, _ = activation_functions(arch)
    psis = preactivations(params, arch, points)
    u = act(psis[-1]) @ params.output_weights.T
    return u[0] if single else u
