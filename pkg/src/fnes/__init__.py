"""Spectral solvers and condition checks for fully nonlinear elliptic systems on the torus."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    EllipticTensor,
    GradientField,
    GridSpec,
    NormKind,
    VectorField,
    contract,
    norm,
    spectral_gradient,
    symbol_matrix,
)
from .ellipticity import ellipticity_constant, is_elliptic, nu  # noqa: E402
from .conditions import NonlinearMapDescriptor, check_ak, check_k, check_pm, lipschitz_bound, pm_constants  # noqa: E402
from .solver import picard_solve, solve_linear, verify_comparison  # noqa: E402
from .problems import ProblemSpec, builtin_F, builtin_tensor, reproduce_example  # noqa: E402
from .kernels import BACKEND  # noqa: E402

__all__ = [
    "BACKEND",
    "EllipticTensor",
    "GradientField",
    "GridSpec",
    "NonlinearMapDescriptor",
    "NormKind",
    "ProblemSpec",
    "VectorField",
    "builtin_F",
    "builtin_tensor",
    "check_ak",
    "check_k",
    "check_pm",
    "contract",
    "ellipticity_constant",
    "is_elliptic",
    "lipschitz_bound",
    "norm",
    "nu",
    "picard_solve",
    "pm_constants",
    "reproduce_example",
    "solve_linear",
    "spectral_gradient",
    "symbol_matrix",
    "verify_comparison",
]
