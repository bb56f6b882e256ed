"""
Sampling - Structured collocation grid on the unit cube.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, TYPE_CHECKING

import torch

from mgamsgd.core.errors import ConfigurationError
from mgamsgd.core.network import DTYPE

if TYPE_CHECKING:
    from mgamsgd.core.elasticity import ProblemSpec

logger = logging.getLogger(__name__)

# Face priority for edge and corner points; x0 is the Dirichlet face
FACE_NORMALS = {
    "x0": (-1.0, 0.0, 0.0),
    "x1": (1.0, 0.0, 0.0),
    "y0": (0.0, -1.0, 0.0),
    "y1": (0.0, 1.0, 0.0),
    "z0": (0.0, 0.0, -1.0),
    "z1": (0.0, 0.0, 1.0),
}


@dataclass(frozen=True)
class GridSpec:
    """Grid resolution per axis and boundary densification beta_i."""
    nx: int = 5
    ny: int = 5
    nz: int = 5
    beta_i: float = 0.0

    def __post_init__(self):
        if min(self.nx, self.ny, self.nz) < 2:
            raise ConfigurationError(f"Every axis needs at least 2 points, got ({self.nx}, {self.ny}, {self.nz})")
        if self.beta_i < 0:
            raise ConfigurationError(f"beta_i must be non-negative, got {self.beta_i}")

    @property
    def n_volume(self) -> int:
        """N_Vu, the number of grid points."""
        return self.nx * self.ny * self.nz

    @property
    def n_boundary(self) -> int:
        """N_bu, the number of grid points on the cube surface."""
        return self.n_volume - (self.nx - 2) * (self.ny - 2) * (self.nz - 2)


@dataclass
class SampleSet:
    """
    Collocation points with boundary membership and prescribed data.

    ``interior`` is the full volume set, boundary points included. The
    Dirichlet and Neumann sets index into it.
    """
    interior: torch.Tensor
    weights: torch.Tensor
    dirichlet_index: torch.Tensor
    dirichlet_values: torch.Tensor
    neumann_index: torch.Tensor
    neumann_normals: torch.Tensor
    neumann_tractions: torch.Tensor
    neumann_faces: Tuple[str, ...]

    @property
    def n(self) -> int:
        return self.interior.shape[0]

    @property
    def n_d(self) -> int:
        return self.dirichlet_index.numel()

    @property
    def n_n(self) -> int:
        return self.neumann_index.numel()

    @property
    def n_weighted(self) -> float:
        return float(self.weights.sum())

    @property
    def dirichlet(self) -> torch.Tensor:
        """Points on Gamma_d."""
        return self.interior.index_select(0, self.dirichlet_index)

    @property
    def neumann(self) -> torch.Tensor:
        """Points on Gamma_n."""
        return self.interior.index_select(0, self.neumann_index)

    def face_count(self, face: str) -> int:
        if face == "x0":
            return self.n_d
        return sum(1 for f in self.neumann_faces if f == face)

    def realized_ratio(self) -> float:
        """Weighted share of boundary points, N_b / N_V."""
        on_boundary = torch.zeros(self.n, dtype=torch.bool)
        on_boundary[self.dirichlet_index] = True
        on_boundary[self.neumann_index] = True
        return float(self.weights[on_boundary].sum() / self.weights.sum())


def _face_of(index: Tuple[int, int, int], shape: Tuple[int, int, int]) -> Optional[str]:
    for axis, name in enumerate("xyz"):
        if index[axis] == 0:
            return f"{name}0"
        if index[axis] == shape[axis] - 1:
            return f"{name}1"
    return None


def generate_grid(spec: GridSpec, problem: Optional["ProblemSpec"] = None) -> SampleSet:
    """
    Build the uniform tensor grid with coordinates i / (n - 1) per axis.

    Edge and corner points belong to exactly one face, by the priority
    x0, x1, y0, y1, z0, z1. Boundary points carry a loss weight of
    1 + beta_i in the volume term.

    Args:
        spec: Grid specification
        problem: Source of the prescribed displacement and face tractions;
            without it the attached data is zero

    Returns:
        The sample set, ordered x-major
    """
    shape = (spec.nx, spec.ny, spec.nz)
    axes = [[i / (n - 1) for i in range(n)] for n in shape]

    u0 = tuple(problem.dirichlet_value) if problem is not None else (0.0, 0.0, 0.0)

    points: List[Tuple[float, float, float]] = []
    weights: List[float] = []
    dirichlet: List[int] = []
    neumann: List[int] = []
    faces: List[str] = []
    for k, index in enumerate(itertools.product(*(range(n) for n in shape))):
        points.append(tuple(axes[a][index[a]] for a in range(3)))
        face = _face_of(index, shape)
        if face is None:
            weights.append(1.0)
            continue
        weights.append(1.0 + spec.beta_i)
        if face == "x0":
            dirichlet.append(k)
        else:
            neumann.append(k)
            faces.append(face)

    tractions = [problem.traction_on(f) if problem is not None else (0.0, 0.0, 0.0) for f in faces]
    samples = SampleSet(
        interior=torch.tensor(points, dtype=DTYPE),
        weights=torch.tensor(weights, dtype=DTYPE),
        dirichlet_index=torch.tensor(dirichlet, dtype=torch.long),
        dirichlet_values=torch.tensor([u0] * len(dirichlet), dtype=DTYPE).reshape(-1, 3),
        neumann_index=torch.tensor(neumann, dtype=torch.long),
        neumann_normals=torch.tensor([FACE_NORMALS[f] for f in faces], dtype=DTYPE).reshape(-1, 3),
        neumann_tractions=torch.tensor(tractions, dtype=DTYPE).reshape(-1, 3),
        neumann_faces=tuple(faces),
    )
    logger.debug(
        f"Generated grid {shape} with beta_i={spec.beta_i}: n={samples.n}, n_d={samples.n_d}, n_n={samples.n_n}"
    )
    return samples


def boundary_ratio(spec: GridSpec) -> float:
    """(N_bu + beta_i N_bu) / (N_Vu + beta_i N_bu)."""
    n_b = spec.n_boundary
    return (n_b + spec.beta_i * n_b) / (spec.n_volume + spec.beta_i * n_b)
