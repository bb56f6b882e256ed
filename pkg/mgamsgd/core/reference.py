"""
Reference - Closed-form uniaxial solution and displacement error measures.
"""
import logging
from dataclasses import dataclass
from typing import Callable, List, Tuple

import torch

from mgamsgd.core.elasticity import Material
from mgamsgd.core.errors import DomainError
from mgamsgd.core.network import DTYPE, Architecture, NetworkParams, as_points, forward

logger = logging.getLogger(__name__)

Field = Callable[[torch.Tensor], torch.Tensor]


@dataclass(frozen=True)
class AnalyticUniaxial:
    """
    Uniaxial stress state of the unit cube loaded by (p, 0, 0) on x = 1.

    u_x = (p/E) x, u_y = -nu (p/E)(y - y_c), u_z = -nu (p/E)(z - z_c).
    """
    material: Material
    p: float = -0.1
    centroid: Tuple[float, float] = (0.5, 0.5)

    def __call__(self, points) -> torch.Tensor:
        pts, single = as_points(points)
        strain = self.p / self.material.E
        u = torch.stack([
            strain * pts[:, 0],
            -self.material.nu * strain * (pts[:, 1] - self.centroid[0]),
            -self.material.nu * strain * (pts[:, 2] - self.centroid[1]),
        ], dim=-1)
        return u[0] if single else u

    def stress(self) -> torch.Tensor:
        return torch.diag(torch.tensor([self.p, 0.0, 0.0], dtype=DTYPE))


def analytic_uniaxial(mat: Material, p: float = -0.1) -> AnalyticUniaxial:
    """Displacement field of the uniaxial stress solution."""
    return AnalyticUniaxial(material=mat, p=p)


def network_field(params: NetworkParams, arch: Architecture) -> Field:
    """Displacement field of a network as a callable of points."""
    def field(points: torch.Tensor) -> torch.Tensor:
        with torch.no_grad():
            return forward(params, arch, points)

    return field


def mse_u(predicted: Field, reference: Field, points) -> float:
    """
    Mean squared displacement error (1/n) sum |u - u_r|^2.

    Args:
        predicted: Displacement field under test
        reference: Reference displacement field
        points: (N, 3) evaluation points, N > 0

    Returns:
        The error measure
    """
    pts, _ = as_points(points)
    if pts.shape[0] == 0:
        raise DomainError("mse_u needs at least one point")
    diff = predicted(pts) - reference(pts)
    return float((diff * diff).sum(-1).mean())


def cube_points(n: int) -> torch.Tensor:
    """Uniform n^3 grid on the unit cube, x-major."""
    axis = torch.linspace(0.0, 1.0, n, dtype=DTYPE)
    gx, gy, gz = torch.meshgrid(axis, axis, axis, indexing="ij")
    return torch.stack([gx.reshape(-1), gy.reshape(-1), gz.reshape(-1)], dim=-1)


def uniaxial_params(mat: Material, p: float = -0.1) -> Tuple[Architecture, NetworkParams]:
    """
    A network that reproduces the uniaxial solution exactly.

    One hidden layer of four neurons carries x + 1, y + 1, z + 1 and 1. All
    pre-activations stay at or above 1 on the unit cube, where ELU is the
    identity with vanishing second derivative.

    Returns:
        (architecture, parameters)
    """
    arch = Architecture(n_hidden=1, n_neurons=4)
    strain = p / mat.E
    lateral = -mat.nu * strain
    hidden_w = torch.tensor([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, 0.0],
    ], dtype=DTYPE)
    hidden_b = torch.ones(4, dtype=DTYPE)
    output_w = torch.tensor([
        [strain, 0.0, 0.0, -strain],
        [0.0, lateral, 0.0, -1.5 * lateral],
        [0.0, 0.0, lateral, -1.5 * lateral],
    ], dtype=DTYPE)
    return arch, NetworkParams(hidden_weights=[hidden_w], hidden_biases=[hidden_b], output_weights=output_w)


def lateral_decay_profile(params: NetworkParams, arch: Architecture, n: int = 10) -> List[Tuple[float, float]]:
    """
    Slice-mean of |u_y| + |u_z| for every x-slice of an n^3 grid.

    Returns:
        (x, mean lateral magnitude) pairs ordered by x
    """
    points = cube_points(n)
    u = network_field(params, arch)(points)
    lateral = (u[:, 1].abs() + u[:, 2].abs()).reshape(n, n * n).mean(-1)
    xs = torch.linspace(0.0, 1.0, n, dtype=DTYPE)
    return [(float(x), float(v)) for x, v in zip(xs, lateral)]


def monotone_toward_dirichlet(profile: List[Tuple[float, float]], tol: float = 1e-12) -> bool:
    """True if the lateral magnitude never grows when moving toward x = 0."""
    values = [v for _, v in profile]
    return all(values[i] <= values[i + 1] + tol for i in range(len(values) - 1))
