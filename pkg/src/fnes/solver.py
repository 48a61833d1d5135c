"""Spectral solution of ``A:Du = f`` and Picard iteration for ``F(x, Du) = f``.

On the torus the operator ``u -> A:Du`` annihilates the modes whose
differentiation frequency vanishes: the mean and, on even grids, the
Nyquist checkerboards. Its range is therefore the data with those modes
removed; ``P0`` below denotes that projection and the norm of what it
removes is reported as ``mean_mode``.
"""
from __future__ import annotations

import csv
import functools
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import (
    DimensionError,
    GradientField,
    NormKind,
    UnsupportedDimensionError,
    VectorField,
    contract,
    forward,
    get_threads,
    gradient_from_coefficients,
    inverse_real,
    norm,
    spectral_gradient,
    symbol_matrix,
)

DEFAULT_TOL = 1e-10


class SingularSymbolError(ArithmeticError):
    def __init__(self, message, xi):
        super().__init__(message)
        self.xi = xi


class ZeroModeError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class EstimateViolation(RuntimeError):
    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class LinearSolveOptions:
    regularization_m: float | None = None
    zero_mode_policy: str = "annihilate"
    reject_tol: float = 1e-10

    def __post_init__(self):
        if self.regularization_m is not None and not self.regularization_m > 0:
            raise ValueError("regularization parameter m must be positive")
        if self.zero_mode_policy not in ("annihilate", "reject"):
            raise ValueError(f"unknown zero_mode_policy {self.zero_mode_policy!r}")


class SymbolInverse:
    """Per-frequency inverses of the symbol ``A xi`` on a grid.

    ``inv`` holds ``(A xi)^{-1}`` for every non-null mode and ``sgn_inv`` holds
    ``(A sgn xi)^{-1}`` with ``sgn xi = xi/|xi|``, used by the regularized
    representation. Both are computed by LU with partial pivoting.
    """

    def __init__(self, A, grid):
        self.A = A
        self.grid = grid
        xi = grid.frequency_grid().reshape(-1, grid.n)
        self.active = np.any(xi != 0.0, axis=1)
        self.xi = xi[self.active]
        self.xi_norm = np.linalg.norm(self.xi, axis=1)
        self.inv = self._invert(self.xi, self.xi_norm)
        self._sgn_inv = None

    def _invert(self, xi, xi_norm):
        A = self.A
        inv, det = kernels.invert_symbols(symbol_matrix(A, xi), get_threads())
        floor = 1e-14 * xi_norm**A.N * A.scale**A.N
        bad = np.abs(det) < floor
        if bad.any():
            i = int(np.argmax(bad))
            raise SingularSymbolError(
                f"symbol singular at xi = {xi[i].tolist()} (|det| = {abs(det[i]):.3e})", xi[i]
            )
        return inv

    @property
    def sgn_inv(self):
        if self._sgn_inv is None:
            unit = self.xi / self.xi_norm[:, None]
            self._sgn_inv = self._invert(unit, np.ones(len(unit)))
        return self._sgn_inv

    def solve_hat(self, fhat, m=None):
        """Fourier coefficients of the solution; null modes are set to zero."""
        N = self.A.N
        flat = fhat.reshape(-1, N)
        out = np.zeros_like(flat, dtype=np.complex128)
        rhs = flat[self.active]
        threads = get_threads()
        if m is None:
            # (i A xi)^{-1} = -i (A xi)^{-1}
            scale = np.full(len(rhs), -1j)
            out[self.active] = kernels.apply_symbols(self.inv, rhs, scale, threads)
        else:
            r = self.xi_norm
            h_m = r / (r**2 + 1.0 / float(m) ** 2)
            out[self.active] = kernels.apply_symbols(self.sgn_inv, rhs, -1j * h_m, threads)
        return out.reshape(fhat.shape)


@functools.lru_cache(maxsize=8)
def symbol_inverse(A, grid):
    return SymbolInverse(A, grid)


def _null_content(fhat, grid):
    """Zero the null modes of ``fhat`` in place; return the L2 norm removed."""
    mask = grid.null_modes()
    removed = fhat[mask]
    fhat[mask] = 0.0
    return math.sqrt(grid.cell_volume / grid.size * float(np.sum(np.abs(removed) ** 2)))


def project_null(f):
    """``(P0 f, ||f - P0 f||)``: remove the modes annihilated by differentiation."""
    fhat = forward(f.data, f.grid)
    removed = _null_content(fhat, f.grid)
    return VectorField(f.grid, inverse_real(fhat, f.grid)), removed


def apply_operator(A, u):
    """``A:Du`` evaluated pointwise with the spectral gradient."""
    if u.N != A.N or u.grid.n != A.n:
        raise DimensionError(f"field (N={u.N}, n={u.grid.n}) does not match tensor (N={A.N}, n={A.n})")
    return VectorField(u.grid, contract(A, spectral_gradient(u).data))


def _check_linear(A, f):
    if f.grid.n < 3:
        raise UnsupportedDimensionError(f"linear solves need n >= 3, got n = {f.grid.n}")
    if f.N != A.N or f.grid.n != A.n:
        raise DimensionError(f"field (N={f.N}, n={f.grid.n}) does not match tensor (N={A.N}, n={A.n})")


def solve_linear(A, f, options=None):
    """Solve ``A:Du = P0 f`` for mean-zero ``u``.

    Each non-null mode is inverted as ``u_hat = (i A xi)^{-1} f_hat``. With
    ``options.regularization_m = m`` the multiplier ``1/|xi|`` in
    ``(A xi)^{-1} = (A sgn xi)^{-1} / |xi|`` is replaced by
    ``h_m(xi) = |xi| / (|xi|^2 + m^-2)``.

    Raises
    ------
    UnsupportedDimensionError
        If ``n < 3``.
    SingularSymbolError
        If some grid symbol is numerically singular.
    ZeroModeError
        Under the ``"reject"`` policy when the null-mode content of ``f``
        exceeds ``reject_tol * ||f||``.
    """
    options = options or LinearSolveOptions()
    _check_linear(A, f)
    grid = f.grid
    fhat = forward(f.data, grid)
    removed = _null_content(fhat, grid)
    if options.zero_mode_policy == "reject":
        fn = norm(f)
        if removed > options.reject_tol * fn:
            raise ZeroModeError(f"right-hand side has null-mode content {removed:.3e} > {options.reject_tol:g} * {fn:.3e}")
    uhat = symbol_inverse(A, grid).solve_hat(fhat, options.regularization_m)
    return VectorField(grid, inverse_real(uhat, grid))


def solve_linear_regularized(A, f, m):
    return solve_linear(A, f, LinearSolveOptions(regularization_m=m))


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------


@dataclass
class IterationStep:
    k: int
    residual: float
    a_metric: float
    mean_mode: float
    contraction: float | None = None


@dataclass
class IterationTrace:
    bound: float
    steps: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self):
        return len(self.steps)

    def contractions(self):
        return [s.contraction for s in self.steps if s.contraction is not None]

    def max_contraction(self):
        c = self.contractions()
        return max(c) if c else None

    def to_csv(self, provenance=None):
        buf = io.StringIO()
        if provenance is not None:
            buf.write("# " + json.dumps(provenance, sort_keys=True) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "residual", "a_metric", "contraction", "mean_mode"])
        for s in self.steps:
            c = "" if s.contraction is None else repr(s.contraction)
            w.writerow([s.k, repr(s.residual), repr(s.a_metric), c, repr(s.mean_mode)])
        return buf.getvalue()


def picard_solve(desc, f, tol=DEFAULT_TOL, max_iter=200, u0=None):
    """Solve ``F(x, Du) = f`` by the iteration ``A:Du_{k+1} = P0[A:Du_k - alpha (F(Du_k) - f)]``.

    The map is a contraction in ``||A:D(.)||_{L2}`` with rate at most
    ``beta + gamma`` whenever the descriptor's constants are correct. Stops
    once ``||F(Du_k) - f|| <= tol ||f||``.

    Returns
    -------
    u : VectorField
    trace : IterationTrace

    Raises
    ------
    NonConvergenceError
        When ``max_iter`` is reached; the exception carries the trace.
    """
    grid = f.grid
    A = desc.A_ref
    _check_linear(A, f)
    if not desc.zero_at_zero:
        raise ValueError("picard_solve needs F(x, 0) = 0")
    nu = desc.nu_ref()
    if not nu > 1e-8:
        raise ValueError(f"reference tensor is not elliptic (nu = {nu:.3e})")
    desc.validate(grid.points()[:: max(1, grid.size // 512)])

    inv = symbol_inverse(A, grid)
    alpha = desc.alpha_field(grid)[..., None]
    g = alpha * f.data
    f_norm = norm(f)
    if u0 is None:
        Du = GradientField(grid, np.zeros(grid.shape + (A.N, A.n)))
    else:
        Du = spectral_gradient(u0)
    AD = contract(A, Du.data)
    Fval = desc.apply(Du).data

    K = desc.contraction_bound
    trace = IterationTrace(bound=K)
    eps = np.finfo(float).eps
    over = 0
    uhat = None
    for k in range(1, max_iter + 1):
        what = forward(AD - alpha * Fval + g, grid)
        mean_mode = _null_content(what, grid)
        uhat = inv.solve_hat(what)
        Du = GradientField(grid, gradient_from_coefficients(uhat, grid))
        AD_new = contract(A, Du.data)
        a_metric = norm(VectorField(grid, AD_new - AD))
        Fval = desc.apply(Du).data
        residual = norm(VectorField(grid, Fval - f.data))
        step = IterationStep(k=k, residual=residual, a_metric=a_metric, mean_mode=mean_mode)
        if trace.steps:
            prev = trace.steps[-1]
            floor = 10.0 * eps * max(norm(VectorField(grid, AD_new)), norm(VectorField(grid, g)))
            if prev.a_metric > floor:
                prev.contraction = a_metric / prev.a_metric
                over = over + 1 if prev.contraction > K + 0.05 else 0
                if over == 3:
                    msg = (
                        f"contraction above beta+gamma+0.05 = {K + 0.05:.3f} for 3 consecutive steps "
                        f"(k = {prev.k - 2}..{prev.k}); declared constants may be wrong"
                    )
                    trace.warnings.append(msg)
                    warnings.warn(msg, RuntimeWarning, stacklevel=2)
        trace.steps.append(step)
        AD = AD_new
        if residual <= tol * f_norm:
            trace.converged = True
            break

    u = VectorField(grid, inverse_real(uhat, grid))
    if not trace.converged:
        raise NonConvergenceError(
            f"no convergence after {max_iter} iterations (residual {trace.steps[-1].residual:.3e}, "
            f"target {tol * f_norm:.3e})",
            trace,
        )
    return u, trace


# ---------------------------------------------------------------------------
# comparison estimate
# ---------------------------------------------------------------------------


@dataclass
class ComparisonReport:
    gradient_gap: float
    map_gap: float
    constant: float
    bound: float
    passed: bool
    lions_gap: float | None
    measured_C: float | None
    sobolev_ratio: float | None

    def to_dict(self):
        return {
            "gradient_gap": self.gradient_gap,
            "map_gap": self.map_gap,
            "constant": self.constant,
            "bound": self.bound,
            "passed": self.passed,
            "lions_gap": self.lions_gap,
            "measured_C": self.measured_C,
            "sobolev_ratio": self.sobolev_ratio,
        }


def verify_comparison(desc, u, v, rtol=1e-9):
    """Check ``||Du - Dv|| <= ||alpha||_inf / ((1 - beta - gamma) nu) * ||F(Du) - F(Dv)||``.

    Also reports the measured full-norm constant
    ``||u - v||_LIONS / ||F(Du) - F(Dv)||`` and the discrete Sobolev ratio
    ``||u - v||_{L2*} / ||Du - Dv||``; these are measured, not asserted.

    Raises
    ------
    EstimateViolation
        If the gradient inequality fails beyond ``rtol``.
    """
    if u.grid != v.grid:
        raise ValueError("fields must share a grid")
    if u.grid.n < 3:
        raise UnsupportedDimensionError("comparison estimate needs n >= 3")
    Du, Dv = spectral_gradient(u), spectral_gradient(v)
    grad_gap = norm(Du - Dv)
    map_gap = norm(desc.apply(Du) - desc.apply(Dv))
    constant = desc.alpha_max / ((1.0 - desc.contraction_bound) * desc.nu_ref())
    bound = constant * map_gap
    passed = grad_gap <= bound * (1.0 + rtol) + 1e-300
    diff = u - v
    lions = norm(diff, NormKind.LIONS)
    report = ComparisonReport(
        gradient_gap=grad_gap,
        map_gap=map_gap,
        constant=constant,
        bound=bound,
        passed=bool(passed),
        lions_gap=lions,
        measured_C=lions / map_gap if map_gap > 0 else None,
        sobolev_ratio=norm(diff, NormKind.L2STAR) / grad_gap if grad_gap > 0 else None,
    )
    if not passed:
        raise EstimateViolation(
            f"||Du - Dv|| = {grad_gap:.6e} exceeds bound {bound:.6e}", report
        )
    return report
