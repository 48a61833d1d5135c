"""Built-in tensors and nonlinearities, manufactured solutions, worked examples."""
from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import io as fio
from .conditions import (
    NonlinearMapDescriptor,
    Sampler,
    check_ak,
    check_k,
    k_defect,
    ak_defect,
    pm_constants,
)
from .core import EllipticTensor, GridSpec, VectorField, contract, spectral_gradient
from .ellipticity import ellipticity_constant
from .expr import compile_expression


class RegressionFailure(AssertionError):
    """A worked-example identity no longer holds."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# tensors
# ---------------------------------------------------------------------------

_DIRAC_ROWS = [
    [1, 0, 0, 0, -1, 0, 0, 0, -1, 0, 0, 0],
    [0, 1, 0, 1, 0, 0, 0, 0, 0, 0, 0, -1],
    [0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 1, 0, -1, 0, 1, 0, 0],
]


def _from_rows(rows, N, n):
    # row alpha lists the blocks beta = 1..N, each holding j = 1..n
    return EllipticTensor(np.array(rows, dtype=np.float64).reshape(N, N, n))


def builtin_tensor(name, params=None):
    """Return a named tensor.

    ``cauchy-riemann``, ``dirac`` (4 x 3), ``degenerate-diag`` (``A:X = (X11, X22)``)
    and ``cr-weighted`` with parameters ``kappa, lam, mu, nu0`` (all positive).
    """
    params = dict(params or {})
    if name == "cauchy-riemann":
        return _from_rows([[1, 0, 0, 1], [0, -1, 1, 0]], 2, 2)
    if name == "cr-weighted":
        k = float(params.get("kappa", 1.0))
        lam = float(params.get("lam", 1.0))
        mu = float(params.get("mu", 1.0))
        nu0 = float(params.get("nu0", 1.0))
        if min(k, lam, mu, nu0) <= 0:
            raise ValueError("cr-weighted parameters must be positive")
        return _from_rows([[k, 0, 0, lam], [0, -mu, nu0, 0]], 2, 2)
    if name == "dirac":
        return _from_rows(_DIRAC_ROWS, 4, 3)
    if name == "degenerate-diag":
        return _from_rows([[1, 0, 0, 0], [0, 0, 0, 1]], 2, 2)
    raise KeyError(f"unknown tensor {name!r}; known: {', '.join(BUILTIN_TENSORS)}")


BUILTIN_TENSORS = ("cauchy-riemann", "cr-weighted", "dirac", "degenerate-diag")


def resolve_tensor(spec, base_dir="."):
    """Tensor from a builtin name, ``cr-weighted:k,l,m,n``, a dict or a file path."""
    if isinstance(spec, EllipticTensor):
        return spec
    if isinstance(spec, dict):
        if "builtin" in spec:
            return builtin_tensor(spec["builtin"], spec.get("params"))
        return fio.read_tensor(os.path.join(base_dir, spec["file"]))
    name, _, args = str(spec).partition(":")
    if name in BUILTIN_TENSORS:
        params = {}
        if args:
            vals = [float(v) for v in args.split(",")]
            params = dict(zip(("kappa", "lam", "mu", "nu0"), vals))
        return builtin_tensor(name, params)
    path = os.path.join(base_dir, str(spec))
    if os.path.exists(path):
        return fio.read_tensor(path)
    raise KeyError(f"{spec!r} is neither a builtin tensor nor a file")


# ---------------------------------------------------------------------------
# alpha and nonlinearities
# ---------------------------------------------------------------------------


def parse_alpha(spec, lengths):
    """Return ``(alpha, alpha_max, inv_alpha_max, resolved_spec)``.

    ``spec`` is a positive number or ``{"expr": ..., "min": ..., "max": ...}``;
    missing bounds are measured on a 64-point-per-axis grid.
    """
    if spec is None:
        spec = 1.0
    if isinstance(spec, (int, float)):
        c = float(spec)
        if not c > 0:
            raise ValueError("alpha must be positive")
        return (lambda x, c=c: np.full(len(np.atleast_2d(x)), c)), c, 1.0 / c, c
    fn = compile_expression(spec["expr"], lengths)
    lo, hi = spec.get("min"), spec.get("max")
    if lo is None or hi is None:
        vals = fn(GridSpec((64,) * len(lengths), lengths).points())
        lo = float(vals.min()) if lo is None else float(lo)
        hi = float(vals.max()) if hi is None else float(hi)
    if not lo > 0:
        raise ValueError(f"alpha must be positive, lower bound {lo}")
    return fn, float(hi), 1.0 / float(lo), {"expr": spec["expr"], "min": lo, "max": hi}


_PHI = {"sin": np.sin, "tanh": np.tanh, "id": lambda t: t}


def builtin_F(name, params=None, A=None, lengths=None):
    """Descriptor for a named family of nonlinearities.

    Families
    --------
    ``linear``
        ``F = A:X``; declared ``beta, gamma`` from params (default 0.25 each).
    ``scaled-linear``
        ``F = (1/alpha(x)) A:X``; AK defect is zero for any ``beta, gamma``.
    ``ex8``
        ``F = A:X + eta (b|X| + c|A:X|)`` with ``alpha = 1``, declared
        ``beta = b/nu(A)``, ``gamma = c``; needs ``b/nu + c < 1``.
    ``lipschitz-perturbation``
        ``F = (1/alpha)(A:X + beta nu phi(|X|) eta(x))`` with ``phi`` in
        ``{sin, tanh, id}`` and ``eta(x) = cos(t) e1 + sin(t) e2``,
        ``t = 2 pi x1 / period``; declared ``gamma = (1 - beta)/2``.
    """
    params = dict(params or {})
    A = A if A is not None else builtin_tensor("cauchy-riemann")
    lengths = tuple(lengths) if lengths is not None else (1.0,) * A.n
    nu = ellipticity_constant(A)
    N = A.N

    if name in ("linear", "scaled-linear"):
        aspec = params.get("alpha", 1.0) if name == "scaled-linear" else 1.0
        alpha, amax, iamax, aspec = parse_alpha(aspec, lengths)
        beta = float(params.get("beta", 0.25))
        gamma = float(params.get("gamma", 0.25))

        def F(x, X):
            return contract(A, X) / alpha(x)[:, None]

        resolved = {"family": name, "alpha": aspec, "beta": beta, "gamma": gamma}
        return NonlinearMapDescriptor(F, alpha, amax, iamax, A, beta, gamma, True, name, resolved, nu)

    if name == "ex8":
        b = float(params.get("b", 0.5))
        c = float(params.get("c", 0.45))
        eta = np.asarray(params.get("eta", np.eye(N)[0]), dtype=np.float64)
        if eta.shape != (N,) or abs(np.linalg.norm(eta) - 1.0) > 1e-12:
            raise ValueError(f"eta must be a unit vector in R^{N}")
        if not nu > 0:
            raise ValueError("ex8 needs an elliptic tensor, got nu = 0")
        if not (b > 0 and c > 0 and b / nu + c < 1):
            raise ValueError(f"ex8 needs b, c > 0 and b/nu + c < 1, got b={b}, c={c}, nu={nu}")

        def F(x, X):
            AX = contract(A, X)
            s = b * np.sqrt(np.sum(X**2, axis=(-2, -1))) + c * np.sqrt(np.sum(AX**2, axis=-1))
            return AX + s[:, None] * eta[None, :]

        alpha, amax, iamax, _ = parse_alpha(1.0, lengths)
        resolved = {"family": "ex8", "b": b, "c": c, "eta": eta.tolist()}
        return NonlinearMapDescriptor(F, alpha, amax, iamax, A, b / nu, c, True, name, resolved, nu)

    if name == "lipschitz-perturbation":
        beta = float(params.get("beta", 0.2))
        if not 0 < beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        phi_name = params.get("phi", "sin")
        if phi_name not in _PHI:
            raise ValueError(f"phi must be one of {sorted(_PHI)}")
        phi = _PHI[phi_name]
        period = float(params.get("period", lengths[0]))
        alpha, amax, iamax, aspec = parse_alpha(params.get("alpha", 1.0), lengths)
        slope = beta * nu
        if N < 2:
            raise ValueError("perturbation family needs N >= 2")

        def eta(x):
            t = 2.0 * np.pi * x[:, 0] / period
            out = np.zeros((len(x), N))
            out[:, 0] = np.cos(t)
            out[:, 1] = np.sin(t)
            return out

        def F(x, X):
            r = np.sqrt(np.sum(X**2, axis=(-2, -1)))
            L = slope * phi(r)[:, None] * eta(x)
            return (contract(A, X) + L) / alpha(x)[:, None]

        resolved = {"family": name, "beta": beta, "phi": phi_name, "period": period, "alpha": aspec}
        return NonlinearMapDescriptor(
            F, alpha, amax, iamax, A, beta, (1.0 - beta) / 2.0, True, name, resolved, nu
        )

    raise KeyError(f"unknown family {name!r}; known: {', '.join(BUILTIN_FAMILIES)}")


BUILTIN_FAMILIES = ("linear", "scaled-linear", "ex8", "lipschitz-perturbation")


# ---------------------------------------------------------------------------
# manufactured solutions
# ---------------------------------------------------------------------------


def random_band_limited(grid, N, rng, modes=12, kmax=4, amplitude=1.0):
    """Mean-zero real field made of ``modes`` random Fourier modes with ``|k_i| <= kmax``."""
    if not 1 <= modes <= 20:
        raise ValueError("modes must be between 1 and 20")
    kmax = min(int(kmax), min(grid.shape) // 2 - 1)
    if kmax < 1:
        raise ValueError("grid too coarse for a band-limited field")
    ks = []
    while len(ks) < modes:
        k = rng.integers(-kmax, kmax + 1, size=grid.n)
        if np.any(k != 0):
            ks.append(k)
    x = grid.coordinates()
    L = np.asarray(grid.lengths)
    data = np.zeros(grid.shape + (N,))
    for k in ks:
        phase = np.tensordot(x, 2.0 * np.pi * k / L, axes=([-1], [0]))
        c = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        data += np.real(c[None, :] * np.exp(1j * phase)[..., None])
    return VectorField(grid, amplitude * data / math.sqrt(modes))


def manufactured(u_star_spec, desc, grid):
    """Return ``(u*, f)`` with ``f(x) = F(x, Du*(x))``.

    ``u_star_spec`` is a VectorField or a dict with keys ``seed``, ``modes``
    (at most 20), ``kmax`` and ``amplitude``.
    """
    if isinstance(u_star_spec, VectorField):
        u = u_star_spec
    else:
        spec = dict(u_star_spec or {})
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        u = random_band_limited(
            grid, desc.N, rng, int(spec.get("modes", 12)), int(spec.get("kmax", 4)), float(spec.get("amplitude", 1.0))
        )
    return u, desc.apply(spectral_gradient(u))


def gaussian_sum(grid, N, centers=None, width=0.1):
    """Smooth periodic right-hand side: sums of periodized Gaussians per component."""
    x = grid.coordinates()
    L = np.asarray(grid.lengths)
    rng = np.random.default_rng(7)
    if centers is None:
        centers = rng.uniform(0, 1, size=(N, grid.n)) * L
    data = np.zeros(grid.shape + (N,))
    for a in range(N):
        d = x - centers[a]
        d = d - L * np.round(d / L)
        data[..., a] = np.exp(-np.sum(d**2, axis=-1) / (2.0 * (width * L.min()) ** 2)) * (-1.0) ** a
    return VectorField(grid, data)


# ---------------------------------------------------------------------------
# worked examples
# ---------------------------------------------------------------------------


def _check(checks, name, value, expected, tol=1e-12, relation="eq"):
    if relation == "eq":
        ok = abs(value - expected) <= tol
    else:  # value >= expected
        ok = value >= expected - tol
    checks.append({"name": name, "value": value, "expected": expected, "relation": relation, "tol": tol, "ok": bool(ok)})


def _finish(report):
    bad = [c for c in report["checks"] if not c["ok"]]
    report["ok"] = not bad
    if bad:
        raise RegressionFailure("; ".join(f"{c['name']}: {c['value']!r} vs {c['expected']!r}" for c in bad), report)
    return report


def ex8_witness(b, c):
    """``zeta = (1-b)/sqrt(2c^2 - (1-b)^2)`` and ``Y0 = [[zeta, 1], [1, zeta]]``.

    For the Cauchy-Riemann tensor ``A:Y0 = (2 zeta, 0)``, so
    ``(1-b)^2 |Y0|^2 = c^2 |A:Y0|^2``. Needs ``sqrt(2) c + b > 1``.
    """
    disc = 2.0 * c**2 - (1.0 - b) ** 2
    if not disc > 0:
        raise ValueError("witness needs sqrt(2) c + b > 1")
    zeta = (1.0 - b) / math.sqrt(disc)
    return zeta, np.array([[zeta, 1.0], [1.0, zeta]])


def reproduce_example(name, params=None, sampler=None):
    """Recompute a worked example and check its identities to 1e-12.

    ``ex9``: scaled-linear map on the CR tensor at ``X0 = ones``;
    ``ex8``: the ``(b, c)`` nonlinearity and its separating witness;
    ``pm-constants``: pseudo-monotonicity constants on a 10 x 10 grid.

    Raises
    ------
    RegressionFailure
        Carrying the full report when any identity fails.
    """
    params = dict(params or {})
    sampler = sampler or Sampler(n_x=4, n_XY=8, seed=int(params.get("seed", 0)))
    checks = []
    if name == "ex9":
        alpha = float(params.get("alpha", 0.5))
        if not 0 < alpha <= 0.5:
            raise ValueError("ex9 needs alpha in (0, 1/2]")
        A = builtin_tensor("cauchy-riemann")
        nu = ellipticity_constant(A)
        desc = builtin_F("scaled-linear", {"alpha": alpha, "beta": 0.5, "gamma": 0.25}, A)
        X0 = np.ones((2, 2))
        AX0 = contract(A, X0)
        x0 = np.zeros(2)
        kdef, kscale = k_defect(desc, x0, np.zeros((2, 2)), X0)
        akdef, akbound = ak_defect(desc, x0, X0, np.zeros((2, 2)))
        _check(checks, "nu", nu, 1.0, 1e-12)
        _check(checks, "|X0|", float(np.linalg.norm(X0)), 2.0)
        _check(checks, "|A:X0|", float(np.linalg.norm(AX0)), 2.0)
        _check(checks, "AK defect", akdef, 0.0)
        _check(checks, "K defect", kdef, 2.0 * (1.0 / alpha - 1.0))
        _check(checks, "K defect >= nu|X0|", kdef, kscale, relation="ge")
        kr = check_k(desc, sampler)
        ar = check_ak(desc, sampler)
        _check(checks, "K beta lower bound >= 1", kr.extra["beta_lower_bound"], 1.0, relation="ge")
        _check(checks, "AK max ratio", ar.max_ratio, 0.0, tol=1e-9)
        report = {
            "example": "ex9",
            "alpha": alpha,
            "nu": nu,
            "A:X0": AX0.tolist(),
            "K_defect": kdef,
            "nu_X0": kscale,
            "admissible_beta_exists": kr.extra["admissible_beta_exists"],
            "check_k": kr.to_dict(),
            "check_ak": ar.to_dict(),
            "checks": checks,
        }
        return _finish(report)

    if name == "ex8":
        b = float(params.get("b", 0.5))
        c = float(params.get("c", 0.45))
        A = builtin_tensor("cauchy-riemann")
        desc = builtin_F("ex8", {"b": b, "c": c}, A)
        zeta, Y0 = ex8_witness(b, c)
        nY = float(np.linalg.norm(Y0))
        nAY = float(np.linalg.norm(contract(A, Y0)))
        kdef, kscale = k_defect(desc, np.zeros(2), np.zeros((2, 2)), Y0)
        _check(checks, "b|Y0| + c|A:Y0| - |Y0|", b * nY + c * nAY - nY, 0.0)
        _check(checks, "(1-b)^2|Y0|^2 - c^2|A:Y0|^2", (1 - b) ** 2 * nY**2 - c**2 * nAY**2, 0.0)
        _check(checks, "K ratio at (0, Y0)", kdef / kscale, 1.0)
        ar = check_ak(desc, sampler)
        kr = check_k(desc, sampler)
        _check(checks, "AK max ratio <= 1", 1.0, ar.max_ratio, tol=1e-9, relation="ge")
        _check(checks, "K beta lower bound >= 1", kr.extra["beta_lower_bound"], 1.0, relation="ge")
        report = {
            "example": "ex8",
            "b": b,
            "c": c,
            "zeta": zeta,
            "Y0": Y0.tolist(),
            "|Y0|": nY,
            "|A:Y0|": nAY,
            "check_ak": ar.to_dict(),
            "check_k": kr.to_dict(),
            "checks": checks,
        }
        return _finish(report)

    if name == "pm-constants":
        rows = []
        grid = [(i + 1) / 22.0 for i in range(10)]
        for beta in grid:
            for gamma in grid:
                pc = pm_constants(beta, gamma)
                gap = pc.lam - pc.kappa
                target = (1.0 - (beta + gamma) ** 2) / 2.0
                rows.append({"beta": beta, "gamma": gamma, "lambda": pc.lam, "kappa": pc.kappa, "gap": gap})
                _check(checks, f"kappa > 0 at ({beta:.4f}, {gamma:.4f})", pc.kappa, 0.0, tol=0.0, relation="ge")
                _check(checks, f"lambda - kappa at ({beta:.4f}, {gamma:.4f})", gap, target)
        pc = pm_constants(0.3, 0.4)
        _check(checks, "lambda(0.3, 0.4)", pc.lam, 0.36)
        _check(checks, "kappa(0.3, 0.4)", pc.kappa, 0.105)
        _check(checks, "gap(0.3, 0.4)", pc.lam - pc.kappa, 0.255)
        report = {"example": "pm-constants", "table": rows, "checks": checks}
        return _finish(report)

    raise KeyError(f"unknown example {name!r}; known: ex9, ex8, pm-constants")


# ---------------------------------------------------------------------------
# problem files
# ---------------------------------------------------------------------------


@dataclass
class ProblemSpec:
    """A solve/check problem, usually read from JSON.

    Keys: ``tensor`` (name, ``cr-weighted:...``, ``{"builtin":..}`` or file),
    ``F`` (``{"family": ..., params}``), optional top-level ``alpha``,
    ``beta``, ``gamma`` (used by families that accept them), ``grid``
    (``{"n", "M", "L"}``), ``rhs`` (``{"manufactured": {...}}``,
    ``{"file": path}`` or ``{"expr": [...]}``), ``sampler``
    (``{"n_x", "n_XY", "magnitudes"}``) and ``seed``.
    """

    tensor: object = "dirac"
    F: dict = field(default_factory=lambda: {"family": "ex8", "b": 0.2, "c": 0.3})
    alpha: object = None
    beta: float | None = None
    gamma: float | None = None
    grid: dict = field(default_factory=lambda: {"n": 3, "M": 16, "L": 1.0})
    rhs: dict = field(default_factory=lambda: {"manufactured": {}})
    sampler: dict = field(default_factory=dict)
    seed: int = 0
    base_dir: str = "."

    @classmethod
    def from_dict(cls, d, base_dir="."):
        known = {k: d[k] for k in ("tensor", "F", "alpha", "beta", "gamma", "grid", "rhs", "sampler", "seed") if k in d}
        extra = set(d) - set(known)
        if extra:
            raise ValueError(f"unknown problem keys: {sorted(extra)}")
        return cls(**known, base_dir=base_dir)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))

    def tensor_obj(self):
        return resolve_tensor(self.tensor, self.base_dir)

    def grid_spec(self):
        n = int(self.grid.get("n", self.tensor_obj().n))
        return GridSpec.cube(n, int(self.grid.get("M", 16)), float(self.grid.get("L", 1.0)))

    def descriptor(self):
        params = {k: v for k, v in self.F.items() if k != "family"}
        for key in ("alpha", "beta", "gamma"):
            val = getattr(self, key)
            if val is not None and key not in params:
                params[key] = val
        if self.F["family"] == "ex8":
            params.pop("alpha", None)
            params.pop("beta", None)
            params.pop("gamma", None)
        return builtin_F(self.F["family"], params, self.tensor_obj(), self.grid_spec().lengths)

    def sampler_obj(self):
        s = self.sampler
        return Sampler(
            n_x=int(s.get("n_x", 8)),
            n_XY=int(s.get("n_XY", 16)),
            magnitudes=tuple(s.get("magnitudes", (1e-3, 1.0, 1e3))),
            seed=int(s.get("seed", self.seed)),
        )

    def right_hand_side(self, desc=None):
        """Return ``(f, u_star)``; ``u_star`` is None unless manufactured."""
        desc = desc or self.descriptor()
        grid = self.grid_spec()
        if "manufactured" in self.rhs:
            spec = dict(self.rhs["manufactured"] or {})
            spec.setdefault("seed", self.seed)
            u, f = manufactured(spec, desc, grid)
            return f, u
        if "file" in self.rhs:
            f = fio.read_efos(os.path.join(self.base_dir, self.rhs["file"]))
            return f, None
        if "expr" in self.rhs:
            exprs = self.rhs["expr"]
            if len(exprs) != desc.N:
                raise ValueError(f"rhs needs {desc.N} expressions")
            pts = grid.points()
            cols = [compile_expression(e, grid.lengths)(pts) for e in exprs]
            return VectorField(grid, np.stack(cols, axis=-1).reshape(grid.shape + (desc.N,))), None
        raise ValueError(f"unknown rhs spec {self.rhs!r}")

    def to_dict(self):
        return {
            "tensor": self.tensor,
            "F": self.F,
            "alpha": self.alpha,
            "beta": self.beta,
            "gamma": self.gamma,
            "grid": self.grid,
            "rhs": self.rhs,
            "sampler": self.sampler,
            "seed": self.seed,
        }
