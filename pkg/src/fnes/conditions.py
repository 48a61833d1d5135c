"""Sampled checks of the ellipticity conditions for a nonlinear map ``F(x, X)``.

Sampling can falsify a condition but never prove it: a report with verdict
``"consistent"`` only means no sampled point violated it.

Two perturbation conventions are checked, each exactly as stated:

* AK condition, increment ``X`` on base ``Y``::

      |alpha(x) [F(x, X+Y) - F(x, Y)] - A:X| <= beta nu |X| + gamma |A:X|

* K condition, increment ``Y`` on base ``X``::

      |[F(x, X+Y) - F(x, X)] - A:Y| <= beta nu |Y|
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import EllipticTensor, GradientField, GridSpec, VectorField, contract
from .ellipticity import ellipticity_report

FALSIFY_RTOL = 1e-9


class EvaluatorError(ArithmeticError):
    """A map evaluator returned non-finite values."""


class ConditionViolation(RuntimeError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def _fro(X):
    return np.sqrt(np.sum(X**2, axis=(-2, -1)))


def _vnorm(v):
    return np.sqrt(np.sum(v**2, axis=-1))


@dataclass
class NonlinearMapDescriptor:
    """A Caratheodory map ``F(x, X)`` with its ellipticity metadata.

    ``F`` and ``alpha`` are vectorized: ``F(x, X)`` takes ``x`` of shape
    ``(P, n)`` and ``X`` of shape ``(P, N, n)`` and returns ``(P, N)``;
    ``alpha(x)`` returns ``(P,)``. ``alpha_max`` and ``inv_alpha_max`` are
    the declared bounds of ``alpha`` and ``1/alpha``.
    """

    F: Callable
    alpha: Callable
    alpha_max: float
    inv_alpha_max: float
    A_ref: EllipticTensor
    beta: float
    gamma: float
    zero_at_zero: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)
    nu: float | None = None

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValueError(f"beta must lie in (0, 1), got {self.beta}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")
        if not self.beta + self.gamma < 1.0:
            raise ValueError(f"need beta + gamma < 1, got {self.beta + self.gamma}")
        if not (self.alpha_max > 0 and self.inv_alpha_max > 0):
            raise ValueError("alpha bounds must be positive")

    @property
    def N(self):
        return self.A_ref.N

    @property
    def n(self):
        return self.A_ref.n

    @property
    def contraction_bound(self):
        return self.beta + self.gamma

    def nu_ref(self):
        if self.nu is None:
            self.nu = ellipticity_report(self.A_ref).nu
        return self.nu

    def evaluate(self, x, X):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.N, self.n)
        out = np.asarray(self.F(x, X), dtype=np.float64)
        bad = ~np.all(np.isfinite(out), axis=-1)
        if bad.any():
            i = int(np.argmax(bad))
            raise EvaluatorError(f"{self.name}: non-finite F at x={x[i].tolist()}, X={X[i].tolist()}")
        return out

    def alpha_at(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return np.broadcast_to(np.asarray(self.alpha(x), dtype=np.float64), (len(x),))

    def validate(self, x):
        """Check declared alpha bounds and ``F(x, 0) = 0`` at sample points ``x``."""
        a = self.alpha_at(x)
        lo, hi = 1.0 / self.inv_alpha_max, self.alpha_max
        if np.any(a < lo * (1 - 1e-12)) or np.any(a > hi * (1 + 1e-12)):
            raise ValueError(f"{self.name}: alpha outside declared range [{lo}, {hi}]")
        if self.zero_at_zero:
            f0 = self.evaluate(x, np.zeros((len(np.atleast_2d(x)), self.N, self.n)))
            if np.max(np.abs(f0)) > 1e-12:
                raise ValueError(f"{self.name}: declared F(x, 0) = 0 but |F(x, 0)| = {np.max(np.abs(f0))}")

    def apply(self, Du: GradientField) -> VectorField:
        """Evaluate ``F(x, Du(x))`` at every grid point."""
        grid = Du.grid
        vals = self.evaluate(grid.points(), Du.pointwise())
        return VectorField(grid, vals.reshape(grid.shape + (self.N,)))

    def alpha_field(self, grid: GridSpec):
        return self.alpha_at(grid.points()).reshape(grid.shape)


@dataclass
class PMConstants:
    lam: float
    kappa: float
    M: float | None = None
    epsilon: float | None = None


def pm_constants(beta, gamma):
    """Pseudo-monotonicity constants ``lambda = (1 - gamma(gamma+beta))/2`` and
    ``kappa = beta(gamma+beta)/2`` (Young parameter ``epsilon = beta/gamma``)."""
    if not (beta > 0 and gamma > 0 and beta + gamma < 1):
        raise ValueError(f"need beta, gamma > 0 and beta + gamma < 1, got ({beta}, {gamma})")
    s = beta + gamma
    return PMConstants(lam=(1.0 - gamma * s) / 2.0, kappa=beta * s / 2.0, epsilon=beta / gamma)


# ---------------------------------------------------------------------------
# pointwise defects
# ---------------------------------------------------------------------------


def ak_defect(desc, x, X, Y):
    """Defect and bound of the AK inequality (vectorized over leading axes)."""
    x = np.atleast_2d(x)
    X = np.asarray(X, dtype=np.float64).reshape(-1, desc.N, desc.n)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1, desc.N, desc.n)
    nu = desc.nu_ref()
    AX = contract(desc.A_ref, X)
    a = desc.alpha_at(x)[:, None]
    d = a * (desc.evaluate(x, X + Y) - desc.evaluate(x, Y)) - AX
    defect = _vnorm(d)
    bound = desc.beta * nu * _fro(X) + desc.gamma * _vnorm(AX)
    if defect.size == 1:
        return float(defect[0]), float(bound[0])
    return defect, bound


def k_defect(desc, x, X, Y):
    """Defect ``|F(x,X+Y) - F(x,X) - A:Y|`` and scale ``nu |Y|`` of the K inequality."""
    x = np.atleast_2d(x)
    X = np.asarray(X, dtype=np.float64).reshape(-1, desc.N, desc.n)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1, desc.N, desc.n)
    nu = desc.nu_ref()
    d = desc.evaluate(x, X + Y) - desc.evaluate(x, X) - contract(desc.A_ref, Y)
    defect = _vnorm(d)
    scale = nu * _fro(Y)
    if defect.size == 1:
        return float(defect[0]), float(scale[0])
    return defect, scale


def pm_terms(desc, x, X, Y, constants=None):
    """Both sides of the pseudo-monotonicity inequality.

    Returns ``(lhs, main, slack)`` with ``lhs = (A:Y)^T [F(x,X+Y) - F(x,X)]``,
    ``main = lambda/alpha |A:Y|^2`` and ``slack = kappa/alpha nu^2 |Y|^2``; the
    inequality reads ``lhs >= main - slack``.
    """
    c = constants or pm_constants(desc.beta, desc.gamma)
    x = np.atleast_2d(x)
    X = np.asarray(X, dtype=np.float64).reshape(-1, desc.N, desc.n)
    Y = np.asarray(Y, dtype=np.float64).reshape(-1, desc.N, desc.n)
    nu = desc.nu_ref()
    AY = contract(desc.A_ref, Y)
    a = desc.alpha_at(x)
    lhs = np.sum(AY * (desc.evaluate(x, X + Y) - desc.evaluate(x, X)), axis=-1)
    main = c.lam / a * np.sum(AY**2, axis=-1)
    slack = c.kappa / a * nu**2 * _fro(Y) ** 2
    return lhs, main, slack


def _ratio(defect, bound, abs_zero=1e-12):
    defect = np.atleast_1d(np.asarray(defect, dtype=np.float64))
    bound = np.atleast_1d(np.asarray(bound, dtype=np.float64))
    out = np.zeros_like(defect)
    pos = bound > 0
    out[pos] = defect[pos] / bound[pos]
    zero = ~pos
    out[zero] = np.where(defect[zero] <= abs_zero, 0.0, np.inf)
    return out


def _ak_ratio(desc, x, X, Y):
    d, b = ak_defect(desc, x, X, Y)
    return _ratio(d, b)


def _k_ratio(desc, x, X, Y):
    d, s = k_defect(desc, x, X, Y)
    return _ratio(d, desc.beta * np.asarray(s))


def _pm_ratio(desc, x, X, Y):
    lhs, main, slack = pm_terms(desc, x, X, Y)
    # inequality <=> main - lhs <= slack
    return _ratio(np.maximum(main - lhs, 0.0), slack)


_RATIOS = {"AK": _ak_ratio, "K": _k_ratio, "PM": _pm_ratio}


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


@dataclass
class Sampler:
    """Random probes ``(x, X, Y)`` plus fixed deterministic probes.

    ``n_x`` grid points, and for each ordered pair of magnitudes from
    ``magnitudes`` another ``n_XY`` Gaussian pairs ``(X, Y)`` scaled by them.
    The generator is NumPy's PCG64 seeded with ``seed``.
    """

    n_x: int = 8
    n_XY: int = 16
    magnitudes: tuple = (1e-3, 1.0, 1e3)
    seed: int = 0
    grid: GridSpec | None = None

    @property
    def total(self):
        return self.n_x * self.n_XY * len(self.magnitudes) ** 2

    def draw(self, N, n, probes=()):
        rng = np.random.default_rng(self.seed)
        grid = self.grid or GridSpec.cube(n, 8, 1.0)
        pts = grid.points()
        xi = rng.integers(0, len(pts), size=self.n_x)
        xs = pts[xi]
        mags = np.array([(s, t) for s in self.magnitudes for t in self.magnitudes], dtype=np.float64)
        per_x = self.n_XY * len(mags)
        X = rng.standard_normal((self.n_x, per_x, N, n))
        Y = rng.standard_normal((self.n_x, per_x, N, n))
        m = np.repeat(mags, self.n_XY, axis=0)
        X *= m[None, :, 0, None, None]
        Y *= m[None, :, 1, None, None]
        x_all = np.repeat(xs, per_x, axis=0)
        X = X.reshape(-1, N, n)
        Y = Y.reshape(-1, N, n)
        if len(probes):
            P = np.asarray(probes, dtype=np.float64)  # (K, 2, N, n)
            x_p = np.repeat(xs, len(P), axis=0)
            X = np.concatenate([X, np.tile(P[:, 0], (self.n_x, 1, 1))])
            Y = np.concatenate([Y, np.tile(P[:, 1], (self.n_x, 1, 1))])
            x_all = np.concatenate([x_all, x_p])
        return x_all, X, Y


def mandatory_probes(desc):
    """Fixed probes: zero, basis matrices, the rank-one ellipticity witness and,
    for 2 x 2 maps, the all-ones matrix and the ex8 witness family, each in
    both increment and base position and at every magnitude of the ladder."""
    N, n = desc.N, desc.n
    mats = []
    for a in range(N):
        for j in range(n):
            E = np.zeros((N, n))
            E[a, j] = 1.0
            mats.append(E)
    rep = ellipticity_report(desc.A_ref)
    mats.append(np.outer(rep.argmin_eta, rep.argmin_a))
    if (N, n) == (2, 2):
        mats.append(np.ones((2, 2)))
        for z in (0.5, 1.0, 1.27, 2.0):
            mats.append(np.array([[z, 1.0], [1.0, z]]))
            mats.append(np.array([[1.0, z], [z, 1.0]]))
    zero = np.zeros((N, n))
    probes = [(zero, zero)]
    for s in (1e-3, 1.0, 1e3):
        for M_ in mats:
            probes.append((zero, s * M_))
            probes.append((s * M_, zero))
            probes.append((s * M_, s * M_))
    return np.array(probes)


@dataclass
class ConditionReport:
    condition: str
    n_samples: int
    max_ratio: float
    witness: tuple
    verdict: str
    extra: dict = field(default_factory=dict)

    def reevaluate(self, desc):
        x, X, Y = self.witness
        return float(_RATIOS[self.condition](desc, x[None, :], X[None], Y[None])[0])

    def to_dict(self):
        x, X, Y = self.witness
        return {
            "condition": self.condition,
            "n_samples": self.n_samples,
            "max_ratio": self.max_ratio,
            "verdict": self.verdict,
            "witness": {"x": x.tolist(), "X": X.tolist(), "Y": Y.tolist()},
            **self.extra,
        }


def _run(desc, sampler, condition, extra_fn=None, chunk=20000):
    x, X, Y = sampler.draw(desc.N, desc.n, mandatory_probes(desc))
    fn = _RATIOS[condition]
    best, best_i = -1.0, 0
    extra_acc = []
    for s in range(0, len(x), chunk):
        r = fn(desc, x[s : s + chunk], X[s : s + chunk], Y[s : s + chunk])
        i = int(np.argmax(r))
        if r[i] > best:
            best, best_i = float(r[i]), s + i
        if extra_fn is not None:
            extra_acc.append(extra_fn(desc, x[s : s + chunk], X[s : s + chunk], Y[s : s + chunk]))
    verdict = "falsified" if best > 1.0 + FALSIFY_RTOL else "consistent"
    report = ConditionReport(
        condition=condition,
        n_samples=len(x),
        max_ratio=best,
        witness=(x[best_i].copy(), X[best_i].copy(), Y[best_i].copy()),
        verdict=verdict,
    )
    return report, extra_acc


def check_ak(desc, sampler=None):
    """Sampled test of the AK inequality; ``max_ratio`` is the worst defect/bound."""
    report, _ = _run(desc, sampler or Sampler(), "AK")
    return report


def check_k(desc, sampler=None):
    """Sampled test of the K inequality with the descriptor's ``beta``.

    ``extra["beta_lower_bound"]`` is the supremum of ``defect / (nu |Y|)``
    over the samples, a lower bound on any admissible ``beta``;
    ``extra["admissible_beta_exists"]`` is False once it reaches 1.
    """

    def sup_ratio(d, x, X, Y):
        defect, scale = k_defect(d, x, X, Y)
        r = _ratio(defect, scale)
        return float(np.max(r)) if r.size else 0.0

    report, acc = _run(desc, sampler or Sampler(), "K", extra_fn=sup_ratio)
    lb = max(acc) if acc else 0.0
    report.extra["beta_lower_bound"] = lb
    report.extra["admissible_beta_exists"] = bool(lb < 1.0 - FALSIFY_RTOL)
    return report


def check_pm(desc, sampler=None):
    """Sampled test of pseudo-monotonicity with the constants of :func:`pm_constants`.

    ``max_ratio`` is the worst ``(main - lhs)_+ / slack`` (see :func:`pm_terms`).
    """
    report, _ = _run(desc, sampler or Sampler(), "PM")
    c = pm_constants(desc.beta, desc.gamma)
    report.extra.update({"lambda": c.lam, "kappa": c.kappa})
    return report


@dataclass
class LipschitzReport:
    M: float
    empirical: float
    witness: tuple

    def to_dict(self):
        x, X, Y = self.witness
        return {
            "M": self.M,
            "empirical": self.empirical,
            "witness": {"x": x.tolist(), "X": X.tolist(), "Y": Y.tolist()},
        }


def lipschitz_constant(desc):
    """``M = ||1/alpha||_inf ((1 + gamma)|A| + beta nu)`` with |A| the operator norm."""
    return desc.inv_alpha_max * ((1.0 + desc.gamma) * desc.A_ref.op_norm() + desc.beta * desc.nu_ref())


def lipschitz_bound(desc, sampler=None):
    """Analytic Lipschitz bound and the empirical sup of ``|F(x,X)-F(x,Y)|/|X-Y|``.

    Raises
    ------
    ConditionViolation
        If the empirical ratio exceeds ``M (1 + 1e-6)``.
    """
    M = lipschitz_constant(desc)
    x, X, Y = (sampler or Sampler()).draw(desc.N, desc.n, mandatory_probes(desc))
    dist = _fro(X - Y)
    keep = dist >= 1e-8
    x, X, Y, dist = x[keep], X[keep], Y[keep], dist[keep]
    ratio = _vnorm(desc.evaluate(x, X) - desc.evaluate(x, Y)) / dist
    i = int(np.argmax(ratio))
    rep = LipschitzReport(M=M, empirical=float(ratio[i]), witness=(x[i], X[i], Y[i]))
    if rep.empirical > M * (1.0 + 1e-6):
        raise ConditionViolation(
            f"{desc.name}: empirical Lipschitz ratio {rep.empirical:.6g} exceeds M = {M:.6g}",
            witness=rep.witness,
        )
    return rep
