"""Ellipticity constant and determinant test for a constant-coefficient tensor.

``nu(A) = min_{|eta|=|a|=1} |A:(eta x a)|`` equals the minimum over the unit
sphere of the smallest singular value of the symbol ``Aa``. Both this and
``min_{|a|=1} |det(Aa)|`` are found by a coarse quasi-uniform sphere grid
followed by Nelder-Mead polishing in a tangent-plane chart. The objective is
even in ``a``, so only a hemisphere is sampled.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .core import symbol_matrix

DEFAULT_RESOLUTION = 64
DEFAULT_RESTARTS = 4


class EllipticityConsistencyError(RuntimeError):
    """The singular-value and determinant searches contradict each other."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass
class EllipticityReport:
    nu: float
    argmin_a: np.ndarray
    argmin_eta: np.ndarray
    min_abs_det: float
    argmin_det_a: np.ndarray
    resolution: int
    refined: bool
    indeterminate: bool = False

    def to_dict(self):
        return {
            "nu": self.nu,
            "argmin_a": self.argmin_a.tolist(),
            "argmin_eta": self.argmin_eta.tolist(),
            "min_abs_det": self.min_abs_det,
            "argmin_det_a": self.argmin_det_a.tolist(),
            "resolution": self.resolution,
            "refined": self.refined,
            "indeterminate": self.indeterminate,
        }


def _canonical(a):
    """Flip each row so its first nonzero entry is positive."""
    a = np.atleast_2d(a)
    idx = np.argmax(np.abs(a) > 1e-15, axis=1)
    sign = np.sign(a[np.arange(len(a)), idx])
    sign[sign == 0] = 1.0
    return a * sign[:, None]


def sphere_grid(n, resolution):
    """Quasi-uniform unit vectors on a hemisphere of S^{n-1}.

    ``resolution`` is the number of samples per great circle, i.e. the
    spacing is about ``2 pi / resolution``.
    """
    if resolution < 8:
        raise ValueError("resolution must be at least 8 samples per great circle")
    if n == 1:
        return np.ones((1, 1))
    if n == 2:
        t = 2.0 * np.pi * np.arange(resolution // 2) / resolution
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        count = max(16, math.ceil(resolution**2 / (2.0 * np.pi)))
        i = np.arange(count)
        z = (i + 0.5) / count
        r = np.sqrt(1.0 - z**2)
        phi = i * np.pi * (3.0 - np.sqrt(5.0))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # gnomonic lattice on the positive cube faces, projected to the sphere
    m = max(4, math.ceil(resolution / 4))
    ticks = np.linspace(-1.0, 1.0, m)
    rest = np.stack(np.meshgrid(*([ticks] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    faces = []
    for d in range(n):
        pts = np.insert(rest, d, 1.0, axis=1)
        faces.append(pts)
    pts = np.concatenate(faces)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _sigma_min_batch(A, a):
    return np.linalg.svd(symbol_matrix(A, a), compute_uv=False)[..., -1]


def _abs_det_batch(A, a):
    return np.abs(np.linalg.det(symbol_matrix(A, a)))


def sigma_min(A, a):
    """Smallest singular value of the symbol ``Aa`` for a unit vector ``a``."""
    a = np.asarray(a, dtype=np.float64)
    if abs(np.linalg.norm(a) - 1.0) > 1e-12:
        raise ValueError(f"direction must be a unit vector, |a| = {np.linalg.norm(a)!r}")
    return float(_sigma_min_batch(A, a[None, :])[0])


def _tangent_basis(a):
    # orthonormal basis of the complement of a
    q, _ = np.linalg.qr(np.column_stack([a, np.eye(len(a))]))
    return q[:, 1 : len(a)]


def _polish(objective, a0, step):
    n = len(a0)
    if n == 1:
        return a0, float(objective(a0[None, :])[0]), True
    T = _tangent_basis(a0)

    def chart(t):
        v = a0 + T @ t
        return v / np.linalg.norm(v)

    def f(t):
        return float(objective(chart(t)[None, :])[0])

    simplex = np.vstack([np.zeros(n - 1), step * np.eye(n - 1)])
    res = minimize(
        f,
        np.zeros(n - 1),
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": 1e-14, "fatol": 1e-16, "maxiter": 4000},
    )
    a = chart(res.x)
    # second pass from the polished point with a smaller simplex
    T = _tangent_basis(a)
    a0 = a
    simplex = np.vstack([np.zeros(n - 1), 1e-3 * step * np.eye(n - 1)])
    res2 = minimize(
        f,
        np.zeros(n - 1),
        method="Nelder-Mead",
        options={"initial_simplex": simplex, "xatol": 1e-15, "fatol": 1e-17, "maxiter": 4000},
    )
    a = chart(res2.x)
    val = float(objective(a[None, :])[0])
    return a, val, bool(res.success and res2.success)


def _minimize_on_sphere(objective, n, resolution, restarts, seeds=()):
    grid = sphere_grid(n, resolution)
    if len(seeds):
        grid = np.vstack([grid, _canonical(np.asarray(seeds, dtype=np.float64))])
    vals = objective(grid)
    order = np.argsort(vals, kind="stable")
    best_val, best_a = float(vals[order[0]]), grid[order[0]]
    step = 2.0 * np.pi / resolution
    refined = True
    for idx in order[: max(1, restarts)]:
        a, v, ok = _polish(objective, grid[idx], step)
        refined = refined and ok
        if v < best_val:
            best_val, best_a = v, a
    return best_val, _canonical(best_a)[0], refined


def min_abs_det(A, resolution=DEFAULT_RESOLUTION, restarts=DEFAULT_RESTARTS):
    """Return ``(min_{|a|=1} |det(Aa)|, argmin a)``."""

    def obj(a):
        return _abs_det_batch(A, a)

    val, a, _ = _minimize_on_sphere(obj, A.n, resolution, restarts)
    return val, a


def nu(A, resolution=DEFAULT_RESOLUTION, restarts=DEFAULT_RESTARTS):
    """Ellipticity constant of ``A`` with witnesses, plus the determinant minimum.

    The two searches seed each other with their minimizers, so the reported
    values always satisfy ``nu**N <= min_abs_det <= nu * |A|_F**(N-1)``
    up to roundoff.
    """

    def sig(a):
        return _sigma_min_batch(A, a)

    def det(a):
        return _abs_det_batch(A, a)

    nu_val, a_nu, ok1 = _minimize_on_sphere(sig, A.n, resolution, restarts)
    det_val, a_det, ok2 = _minimize_on_sphere(det, A.n, resolution, restarts, seeds=[a_nu])
    s_cross = float(sig(a_det[None, :])[0])
    if s_cross < nu_val:
        nu_val, a_nu = s_cross, a_det

    _, s, vt = np.linalg.svd(symbol_matrix(A, a_nu))
    eta = vt[-1]
    return EllipticityReport(
        nu=float(s[-1]),
        argmin_a=a_nu,
        argmin_eta=eta,
        min_abs_det=float(det_val),
        argmin_det_a=a_det,
        resolution=resolution,
        refined=ok1 and ok2,
    )


@functools.lru_cache(maxsize=64)
def _cached(A, resolution, restarts):
    return nu(A, resolution, restarts)


def ellipticity_report(A, resolution=DEFAULT_RESOLUTION, restarts=DEFAULT_RESTARTS):
    """Cached :func:`nu` (tensors are hashable by value)."""
    return _cached(A, resolution, restarts)


def ellipticity_constant(A):
    return ellipticity_report(A).nu


def is_elliptic(A, tol=1e-8, resolution=DEFAULT_RESOLUTION, restarts=DEFAULT_RESTARTS):
    """Classify ``A`` by ``nu > tol``.

    Returns
    -------
    elliptic : bool
    report : EllipticityReport
        ``report.indeterminate`` is set when the determinant test with
        threshold ``tol**N`` disagrees with the ``nu`` test inside the band
        allowed by ``sigma_min**N <= |det| <= sigma_min * sigma_max**(N-1)``.

    Raises
    ------
    EllipticityConsistencyError
        If the two minima violate those bounds, which no tensor can do.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    report = nu(A, resolution, restarts)
    N = A.N
    lower = report.nu**N
    upper = report.nu * A.frobenius() ** (N - 1)
    slack = 1e-9 * max(upper, 1e-300) + 1e-15 * max(A.scale, 1.0) ** N
    if report.min_abs_det < lower - slack or report.min_abs_det > upper + slack:
        raise EllipticityConsistencyError(
            f"min |det| = {report.min_abs_det:.6e} outside [{lower:.6e}, {upper:.6e}] "
            f"implied by nu = {report.nu:.6e} (a_nu={report.argmin_a}, a_det={report.argmin_det_a})",
            report,
        )
    by_nu = report.nu > tol
    by_det = report.min_abs_det > tol**N
    report.indeterminate = by_nu != by_det
    return by_nu, report


def classify(report, scale, N, nu_bands=(1e-8, 1e-6), det_bands=(1e-12, 1e-9)):
    """Two-sided classification of a report by both criteria.

    Returns a tuple ``(by_nu, by_det, verdict)`` where each entry is one of
    ``"elliptic"``, ``"degenerate"``, ``"indeterminate"``; ``verdict`` is
    ``"agree"``, ``"indeterminate"`` or ``"misclassified"``. Thresholds are
    relative to ``scale`` (``scale**N`` for determinants).
    """

    def band(value, lo, hi):
        if value > hi:
            return "elliptic"
        if value < lo:
            return "degenerate"
        return "indeterminate"

    by_nu = band(report.nu, nu_bands[0] * scale, nu_bands[1] * scale)
    by_det = band(report.min_abs_det, det_bands[0] * scale**N, det_bands[1] * scale**N)
    if "indeterminate" in (by_nu, by_det):
        verdict = "indeterminate"
    elif by_nu == by_det:
        verdict = "agree"
    else:
        verdict = "misclassified"
    return by_nu, by_det, verdict
