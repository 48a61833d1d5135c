"""Tensor and field algebra on periodic grids.

Conventions
-----------
* A tensor ``A`` has shape ``(N, N, n)`` indexed ``(alpha, beta, j)`` and acts on
  an ``N x n`` matrix ``X`` by ``(A:X)_alpha = sum_{beta,j} A[alpha,beta,j] X[beta,j]``.
* Fields live on the box ``[0, L_1) x ... x [0, L_n)`` sampled at ``M_i`` points
  per axis. Vector fields have data shape ``grid.shape + (N,)``; gradient fields
  ``grid.shape + (N, n)``.
* Physical frequencies are ``xi = (2 pi / L) k`` with ``k`` in the symmetric
  integer window. Differentiation multiplies mode ``k`` by ``i xi``. On an even
  grid the Nyquist wavenumber is differentiated to zero (the sampled derivative
  of the checkerboard mode vanishes), which keeps derivatives of real fields real.
"""
from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
import scipy.fft

from . import kernels


class DimensionError(ValueError):
    """Shapes of tensors, matrices or fields do not agree."""


class UnsupportedDimensionError(DimensionError):
    """The operation needs a larger spatial dimension (e.g. 2* needs n >= 3)."""


class RealFieldError(ArithmeticError):
    """An inverse transform produced a significant imaginary part."""


_threads = None


def get_threads():
    """Worker count for FFTs and compiled kernels (env ``FNES_THREADS`` or all cores)."""
    if _threads is not None:
        return _threads
    env = os.environ.get("FNES_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def set_threads(n):
    global _threads
    _threads = None if n is None else max(1, int(n))


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------


class EllipticTensor:
    """Constant-coefficient linear map ``A : R^{N x n} -> R^N``.

    Parameters
    ----------
    entries : array_like, shape (N, N, n)
        Coefficients ``A[alpha, beta, j]``.
    """

    def __init__(self, entries):
        arr = np.array(entries, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[0] != arr.shape[1]:
            raise DimensionError(f"tensor must have shape (N, N, n), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[2] < 1:
            raise DimensionError(f"empty tensor shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor entries must be finite")
        arr.setflags(write=False)
        self._entries = arr

    @property
    def entries(self):
        return self._entries

    @property
    def N(self):
        return self._entries.shape[0]

    @property
    def n(self):
        return self._entries.shape[2]

    @property
    def scale(self):
        """Largest absolute coefficient."""
        return float(np.max(np.abs(self._entries)))

    def as_matrix(self):
        """The ``N x (N n)`` matrix of the linear map (row alpha, column (beta, j))."""
        return self._entries.reshape(self.N, self.N * self.n)

    def op_norm(self):
        """Operator norm of ``X -> A:X`` with Frobenius norm on X."""
        return float(np.linalg.svd(self.as_matrix(), compute_uv=False)[0])

    def frobenius(self):
        return float(np.sqrt(np.sum(self._entries**2)))

    def key(self):
        return (self._entries.shape, self._entries.tobytes())

    def __eq__(self, other):
        return isinstance(other, EllipticTensor) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __mul__(self, t):
        return EllipticTensor(float(t) * self._entries)

    __rmul__ = __mul__

    def __repr__(self):
        return f"EllipticTensor(N={self.N}, n={self.n})"


def contract(A, X):
    """Return ``A:X`` for a matrix ``X`` of shape ``(..., N, n)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-2:] != (A.N, A.n):
        raise DimensionError(f"expected trailing shape {(A.N, A.n)}, got {X.shape}")
    return np.einsum("abj,...bj->...a", A.entries, X)


def symbol_matrix(A, a):
    """Return the ``N x N`` symbol ``(Aa)_{alpha beta} = sum_j A[alpha,beta,j] a_j``.

    ``a`` may carry leading batch dimensions.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1] != A.n:
        raise DimensionError(f"direction must have length {A.n}, got {a.shape}")
    return np.einsum("abj,...j->...ab", A.entries, a)


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on ``[0, L_1) x ... x [0, L_n)``."""

    shape: tuple
    lengths: tuple

    def __post_init__(self):
        shape = tuple(int(m) for m in self.shape)
        lengths = tuple(float(v) for v in self.lengths)
        if len(shape) == 0 or len(shape) != len(lengths):
            raise DimensionError("shape and lengths must be non-empty and of equal length")
        if any(m < 4 for m in shape):
            raise ValueError(f"need at least 4 points per axis, got {shape}")
        if any(not (v > 0 and np.isfinite(v)) for v in lengths):
            raise ValueError(f"box lengths must be positive, got {lengths}")
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def cube(cls, n, M, L=1.0):
        return cls((M,) * n, (L,) * n)

    @property
    def n(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_volume(self):
        return float(np.prod([L / M for L, M in zip(self.lengths, self.shape)]))

    def axis_coordinates(self, axis):
        M, L = self.shape[axis], self.lengths[axis]
        return np.arange(M) * (L / M)

    def coordinates(self):
        """Point coordinates, shape ``grid.shape + (n,)``."""
        axes = [self.axis_coordinates(i) for i in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def points(self):
        """Point coordinates flattened to ``(size, n)`` in storage order."""
        return self.coordinates().reshape(-1, self.n)

    def wavenumbers(self, axis):
        """Integer frequency window ``k`` for one axis, in FFT order."""
        M = self.shape[axis]
        return np.rint(np.fft.fftfreq(M) * M).astype(np.int64)

    def derivative_wavenumbers(self, axis):
        """Physical frequencies ``2 pi k / L`` used for differentiation (Nyquist -> 0)."""
        M, L = self.shape[axis], self.lengths[axis]
        k = self.wavenumbers(axis).astype(np.float64)
        if M % 2 == 0:
            k[M // 2] = 0.0
        return (2.0 * np.pi / L) * k

    def frequency_grid(self):
        """Differentiation frequencies for every mode, shape ``grid.shape + (n,)``."""
        axes = [self.derivative_wavenumbers(i) for i in range(self.n)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def null_modes(self):
        """Boolean mask of modes annihilated by differentiation (mean and checkerboards)."""
        return np.all(self.frequency_grid() == 0.0, axis=-1)


def _check_finite(data, what):
    if not np.all(np.isfinite(data)):
        raise ValueError(f"{what} contains non-finite values")


@dataclass(eq=False)
class VectorField:
    """Sampled map ``u : box -> R^N``; ``data`` has shape ``grid.shape + (N,)``."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.shape[:-1] != self.grid.shape or self.data.ndim != self.grid.n + 1:
            raise DimensionError(
                f"data shape {self.data.shape} does not match grid {self.grid.shape} + (N,)"
            )
        _check_finite(self.data, "VectorField")

    @classmethod
    def zeros(cls, grid, N):
        return cls(grid, np.zeros(grid.shape + (N,)))

    @property
    def N(self):
        return self.data.shape[-1]

    def _other(self, other):
        if isinstance(other, VectorField):
            if other.grid != self.grid or other.N != self.N:
                raise DimensionError("fields live on different grids or have different N")
            return other.data
        return other

    def __add__(self, other):
        return VectorField(self.grid, self.data + self._other(other))

    def __sub__(self, other):
        return VectorField(self.grid, self.data - self._other(other))

    def __mul__(self, t):
        return VectorField(self.grid, self.data * t)

    __rmul__ = __mul__

    def mean(self):
        return self.data.reshape(-1, self.N).mean(axis=0)


@dataclass(eq=False)
class GradientField:
    """Sampled ``N x n`` matrix field; ``data`` has shape ``grid.shape + (N, n)``."""

    grid: GridSpec
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.ndim != self.grid.n + 2 or self.data.shape[:-2] != self.grid.shape:
            raise DimensionError(
                f"data shape {self.data.shape} does not match grid {self.grid.shape} + (N, n)"
            )
        if self.data.shape[-1] != self.grid.n:
            raise DimensionError("gradient column count must equal the spatial dimension")
        _check_finite(self.data, "GradientField")

    @property
    def N(self):
        return self.data.shape[-2]

    def __sub__(self, other):
        return GradientField(self.grid, self.data - other.data)

    def pointwise(self):
        """Matrices flattened to ``(size, N, n)``."""
        return self.data.reshape((-1,) + self.data.shape[-2:])


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def forward(data, grid):
    """FFT over the spatial axes of ``data`` (trailing component axes untouched)."""
    return scipy.fft.fftn(data, axes=tuple(range(grid.n)), workers=get_threads())


def inverse_real(coeffs, grid, rtol=1e-10):
    """Inverse FFT over spatial axes, returning the real part.

    Raises
    ------
    RealFieldError
        If the imaginary part exceeds ``rtol`` relative to the largest value,
        which indicates broken conjugate symmetry upstream.
    """
    out = scipy.fft.ifftn(coeffs, axes=tuple(range(grid.n)), workers=get_threads())
    peak = float(np.max(np.abs(out))) if out.size else 0.0
    imag = float(np.max(np.abs(out.imag))) if out.size else 0.0
    if imag > rtol * max(peak, np.finfo(float).tiny):
        raise RealFieldError(f"imaginary part {imag:.3e} exceeds {rtol:g} of peak {peak:.3e}")
    return np.ascontiguousarray(out.real)


def gradient_from_coefficients(uhat, grid):
    """Gradient data from the Fourier coefficients of a vector field."""
    xi = grid.frequency_grid()  # shape + (n,)
    dhat = (1j * uhat)[..., :, None] * xi[..., None, :]
    return inverse_real(dhat, grid)


def spectral_gradient(u):
    """Spectral gradient ``Du`` of a vector field (exact for band-limited fields)."""
    return GradientField(u.grid, gradient_from_coefficients(forward(u.data, u.grid), u.grid))


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


class NormKind(enum.Enum):
    L2 = "L2"
    L2STAR = "L2STAR"
    LIONS = "LIONS"


def sobolev_exponent(n):
    """The exponent ``2* = 2n/(n-2)``."""
    if n < 3:
        raise UnsupportedDimensionError(f"2* = 2n/(n-2) needs n >= 3, got n = {n}")
    return 2.0 * n / (n - 2)


def _lp(data, grid, ncomp_axes, p):
    sq = np.sum(data**2, axis=tuple(range(-ncomp_axes, 0))).ravel()
    vals = sq if p == 2 else sq ** (p / 2.0)
    total = kernels.pairwise_sum(vals)
    return (grid.cell_volume * total) ** (1.0 / p)


def norm(field, kind=NormKind.L2):
    """Discrete quadrature norm of a vector or gradient field.

    ``L2STAR`` uses the exponent ``2n/(n-2)``; ``LIONS`` is
    ``||u||_{L^2*} + ||Du||_{L^2}`` and only applies to vector fields.
    Pointwise magnitudes are Euclidean (Frobenius for matrices) and the
    quadrature sum uses a fixed-order pairwise reduction.
    """
    kind = NormKind(kind)
    grid = field.grid
    comp_axes = 2 if isinstance(field, GradientField) else 1
    if kind is NormKind.L2:
        return _lp(field.data, grid, comp_axes, 2)
    if kind is NormKind.L2STAR:
        return _lp(field.data, grid, comp_axes, sobolev_exponent(grid.n))
    if isinstance(field, GradientField):
        raise DimensionError("LIONS norm is defined for vector fields only")
    sobolev_exponent(grid.n)
    return norm(field, NormKind.L2STAR) + norm(spectral_gradient(field), NormKind.L2)
