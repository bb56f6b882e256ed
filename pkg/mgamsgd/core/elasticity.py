"""
Elasticity - Material law, strong-form residuals and the composite loss.

Strain, constitutive law and Cauchy traction are satisfied exactly by
construction; equilibrium, Dirichlet and Neumann residuals enter the loss as
point-wise squared norms.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple, TYPE_CHECKING

import torch

from mgamsgd.core.diff_engine import DisplacementJet, JetBatch, jet_batch
from mgamsgd.core.errors import ConfigurationError, DomainError
from mgamsgd.core.network import DTYPE, Architecture, NetworkParams, unflatten

if TYPE_CHECKING:
    from mgamsgd.core.sampling import SampleSet

logger = logging.getLogger(__name__)

FACES = ("x0", "x1", "y0", "y1", "z0", "z1")

# Relative amount of gamma per weighted interior point when gamma is not given
GAMMA_PER_POINT = 0.05


def lame_constants(E: float, nu: float) -> Tuple[float, float]:
    """
    First Lame constant and shear modulus from E and nu.

    Args:
        E: Elasticity modulus (> 0)
        nu: Poisson's ratio in (0, 0.5)

    Returns:
        (lambda, G)
    """
    if not E > 0:
        raise DomainError(f"Elasticity modulus must be positive, got {E}")
    if not 0.0 < nu < 0.5:
        raise DomainError(f"Poisson's ratio must lie in (0, 0.5), got {nu}")
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    G = E / (2.0 * (1.0 + nu))
    return lam, G


@dataclass(frozen=True)
class Material:
    """Homogeneous isotropic linear elastic material."""
    E: float = 1.0
    nu: float = 0.3

    def __post_init__(self):
        # validates the ranges
        lame_constants(self.E, self.nu)

    @property
    def lam(self) -> float:
        return lame_constants(self.E, self.nu)[0]

    @property
    def G(self) -> float:
        return lame_constants(self.E, self.nu)[1]

    @property
    def p_modulus(self) -> float:
        """lambda + 2G, the stress normalization divisor."""
        lam, G = lame_constants(self.E, self.nu)
        return lam + 2.0 * G


def _tensor(x) -> torch.Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


def strain_from_grad(gradu) -> torch.Tensor:
    """Infinitesimal strain 0.5 (grad u + grad u^T) for (..., 3, 3) input."""
    gradu = _tensor(gradu)
    return 0.5 * (gradu + gradu.transpose(-1, -2))


def stress(eps, mat: Material) -> torch.Tensor:
    """Isotropic stress lambda tr(eps) I + 2G eps for (..., 3, 3) strains."""
    eps = _tensor(eps)
    trace = eps.diagonal(dim1=-2, dim2=-1).sum(-1)
    eye = torch.eye(3, dtype=DTYPE)
    return mat.lam * trace[..., None, None] * eye + 2.0 * mat.G * eps


def normalize_stress(sigma, mat: Material) -> torch.Tensor:
    """Stress divided by lambda + 2G."""
    return _tensor(sigma) / mat.p_modulus


def traction(sigma, n) -> torch.Tensor:
    """
    Cauchy traction sigma . n.

    Raises:
        DomainError: If any normal is not of unit length within 1e-12
    """
    sigma, n = _tensor(sigma), _tensor(n)
    norms = torch.linalg.vector_norm(n, dim=-1)
    if torch.any(torch.abs(norms - 1.0) > 1e-12):
        raise DomainError("Traction normals must be unit vectors")
    return (sigma @ n.unsqueeze(-1)).squeeze(-1)


def _as_batch(jet) -> Tuple[JetBatch, bool]:
    if isinstance(jet, JetBatch):
        return jet, False
    if isinstance(jet, DisplacementJet):
        value = _tensor([c.value for c in jet.components]).unsqueeze(0)
        grad = _tensor([c.grad for c in jet.components]).unsqueeze(0)
        hess = _tensor([c.hess for c in jet.components]).unsqueeze(0)
        return JetBatch(value=value, grad=grad, hess=hess), True
    raise TypeError(f"Expected a DisplacementJet or JetBatch, got {type(jet).__name__}")


def equilibrium_residual(jet, mat: Material, f=(0.0, 0.0, 0.0)) -> torch.Tensor:
    """
    Navier form of the balance of linear momentum.

    r2 = (lambda + G) grad(div u) + G lap(u) - f, evaluated from the jet
    Hessians.

    Args:
        jet: DisplacementJet of one point or a JetBatch
        mat: Material
        f: Body force

    Returns:
        (3,) residual for a single jet, (N, 3) for a batch
    """
    batch, single = _as_batch(jet)
    hess = batch.hess_full()
    # hess[n, c, i, j] = d2 u_c / dx_i dx_j
    grad_div = torch.einsum("njij->ni", hess)
    laplacian = torch.einsum("nijj->ni", hess)
    r2 = (mat.lam + mat.G) * grad_div + mat.G * laplacian - _tensor(f)
    return r2[0] if single else r2


@dataclass
class ProblemSpec:
    """
    Boundary value problem on the unit cube.

    Gamma_d is the face x = 0; the five remaining faces form Gamma_n.

    Attributes:
        dirichlet_components: Which displacement components are prescribed on Gamma_d
        dirichlet_value: Prescribed displacement u0
        face_tractions: Prescribed traction per face; absent faces are traction-free
        body_force: Constant body force f
        uniqueness_penalty: Whether the mean lateral displacements are penalized
        gamma: Dirichlet weight; None means 0.05 times the weighted interior count
        normalize_stress: Whether residuals use stress divided by lambda + 2G
    """
    dirichlet_components: Tuple[bool, bool, bool] = (True, False, False)
    dirichlet_value: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    face_tractions: Dict[str, Tuple[float, float, float]] = field(
        default_factory=lambda: {"x1": (-0.1, 0.0, 0.0)}
    )
    body_force: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    uniqueness_penalty: bool = True
    gamma: Optional[float] = None
    normalize_stress: bool = True

    def __post_init__(self):
        if self.gamma is not None and self.gamma < 0:
            raise ConfigurationError(f"gamma must be non-negative, got {self.gamma}")
        if all(self.dirichlet_components) and self.uniqueness_penalty:
            raise ConfigurationError("A fully clamped Dirichlet face cannot be combined with uniqueness penalties")
        unknown = set(self.face_tractions) - set(FACES[1:])
        if unknown:
            raise ConfigurationError(f"Tractions can only be prescribed on Neumann faces, got {sorted(unknown)}")

    @classmethod
    def case_a(cls, p: float = -0.1, gamma: Optional[float] = None,
               normalize_stress: bool = True) -> "ProblemSpec":
        """u_x fixed on x = 0, uniform traction (p, 0, 0) on x = 1, uniqueness penalties."""
        return cls(
            dirichlet_components=(True, False, False),
            face_tractions={"x1": (p, 0.0, 0.0)},
            uniqueness_penalty=True,
            gamma=gamma,
            normalize_stress=normalize_stress,
        )

    @classmethod
    def case_b(cls, p: float = -0.1, gamma: Optional[float] = None,
               normalize_stress: bool = True) -> "ProblemSpec":
        """Fully clamped x = 0 face, uniform traction (p, 0, 0) on x = 1."""
        return cls(
            dirichlet_components=(True, True, True),
            face_tractions={"x1": (p, 0.0, 0.0)},
            uniqueness_penalty=False,
            gamma=gamma,
            normalize_stress=normalize_stress,
        )

    @property
    def case(self) -> str:
        return "B" if all(self.dirichlet_components) else "A"

    def traction_on(self, face: str) -> Tuple[float, float, float]:
        return tuple(self.face_tractions.get(face, (0.0, 0.0, 0.0)))

    def resolve_gamma(self, n_weighted: float) -> float:
        return self.gamma if self.gamma is not None else GAMMA_PER_POINT * n_weighted


@dataclass
class LossBreakdown:
    """Terms of the composite loss; mse is their sum."""
    mse_e: torch.Tensor
    mse_d: torch.Tensor
    mse_n: torch.Tensor
    mse_uq: torch.Tensor
    mse: torch.Tensor

    def terms(self) -> Dict[str, torch.Tensor]:
        return {
            "mse_e": self.mse_e,
            "mse_d": self.mse_d,
            "mse_n": self.mse_n,
            "mse_uq": self.mse_uq,
            "mse": self.mse,
        }

    def detach(self) -> "LossBreakdown":
        return LossBreakdown(**{k: v.detach() for k, v in self.terms().items()})

    def as_floats(self) -> Dict[str, float]:
        return {k: float(v) for k, v in self.terms().items()}


def total_loss(params: NetworkParams, arch: Architecture, samples: "SampleSet",
               problem: ProblemSpec, mat: Material) -> LossBreakdown:
    """
    Composite loss MSE = MSE_d + MSE_n + MSE_e + MSE_uq.

    Terms are reduced interior first, then Gamma_d, then Gamma_n, each in
    sample order.

    Args:
        params: Network parameters (may be views of a flat vector requiring grad)
        arch: Network architecture
        samples: Collocation points with attached boundary data
        problem: Boundary value problem
        mat: Material

    Returns:
        LossBreakdown with tensor terms
    """
    if samples.n_d == 0 or samples.n_n == 0:
        raise ConfigurationError("Both the Dirichlet and the Neumann sample sets must be non-empty")

    jets = jet_batch(params, arch, samples.interior)
    scale = mat.p_modulus if problem.normalize_stress else 1.0
    weights = samples.weights
    n_weighted = weights.sum()

    r2 = equilibrium_residual(jets, mat, problem.body_force) / scale
    mse_e = (weights * (r2 * r2).sum(-1)).sum() / n_weighted

    u_d = jets.value.index_select(0, samples.dirichlet_index)
    mask = _tensor([1.0 if c else 0.0 for c in problem.dirichlet_components])
    r5 = (u_d - samples.dirichlet_values) * mask
    gamma = problem.resolve_gamma(float(n_weighted))
    mse_d = gamma * (r5 * r5).sum(-1).sum() / samples.n_d

    grad_n = jets.grad.index_select(0, samples.neumann_index)
    sigma = stress(strain_from_grad(grad_n), mat)
    t = traction(sigma, samples.neumann_normals)
    r6 = (t - samples.neumann_tractions) / scale
    mse_n = (r6 * r6).sum(-1).sum() / samples.n_n

    if problem.uniqueness_penalty:
        means = (weights.unsqueeze(-1) * jets.value).sum(0) / n_weighted
        mse_uq = means[1] ** 2 + means[2] ** 2
    else:
        mse_uq = torch.zeros((), dtype=DTYPE)

    mse = mse_d + mse_n + mse_e + mse_uq
    return LossBreakdown(mse_e=mse_e, mse_d=mse_d, mse_n=mse_n, mse_uq=mse_uq, mse=mse)


def make_loss(arch: Architecture, samples: "SampleSet", problem: ProblemSpec,
              mat: Material) -> Callable[[torch.Tensor], LossBreakdown]:
    """
    Bind a problem into a loss of the flat parameter vector.

    Returns:
        Callable theta -> LossBreakdown usable by the descent engines
    """
    def loss(theta: torch.Tensor) -> LossBreakdown:
        return total_loss(unflatten(theta, arch), arch, samples, problem, mat)

    return loss
