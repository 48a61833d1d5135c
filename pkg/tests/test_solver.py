import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fnes.core import EllipticTensor, GridSpec, NormKind, UnsupportedDimensionError, VectorField, forward, norm, spectral_gradient
from fnes.ellipticity import ellipticity_constant
from fnes.problems import builtin_F, builtin_tensor, manufactured, random_band_limited
from fnes.solver import (
    EstimateViolation,
    LinearSolveOptions,
    NonConvergenceError,
    SingularSymbolError,
    ZeroModeError,
    apply_operator,
    picard_solve,
    project_null,
    solve_linear,
    verify_comparison,
)

from conftest import perturbed_dirac
from test_conditions import linear_descriptor

G8 = GridSpec.cube(3, 8, 1.0)
G16 = GridSpec.cube(3, 16, 1.0)


def random_field(grid, N, seed):
    return VectorField(grid, np.random.default_rng(seed).standard_normal(grid.shape + (N,)))


# ---------------------------------------------------------------- linear solves


@given(st.integers(0, 10_000), st.booleans())
def test_linear_exactness(seed, perturb):
    A = perturbed_dirac(seed) if perturb else builtin_tensor("dirac")
    f = random_field(G8, 4, seed)
    u = solve_linear(A, f)
    Pf, _ = project_null(f)
    err = norm(apply_operator(A, u) - Pf) / norm(Pf)
    assert err <= 1e-11


def test_single_mode_closed_form(dirac):
    # u = Re(c e^{i xi.x}) gives f_hat = i (A xi) u_hat at +xi
    g = G8
    k = np.array([1, 2, 0])
    xi = 2 * np.pi * k
    c = np.array([1.0, -0.5, 0.25, 2.0]) + 1j * np.array([0.3, 0.0, -1.0, 0.5])
    phase = g.coordinates() @ xi
    u = VectorField(g, np.real(c[None, None, None, :] * np.exp(1j * phase)[..., None]))
    fhat = forward(apply_operator(dirac, u).data, g)
    uhat = forward(u.data, g)
    S = np.einsum("abj,j->ab", dirac.entries, xi)
    assert np.allclose(fhat[1, 2, 0], 1j * S @ uhat[1, 2, 0], atol=1e-10)


def test_recovers_band_limited_field(dirac):
    g = GridSpec.cube(3, 16)
    u_star = random_band_limited(g, 4, np.random.default_rng(0), kmax=5)
    u = solve_linear(dirac, apply_operator(dirac, u_star))
    assert norm(u - u_star) / norm(u_star) < 1e-12


def test_null_content_is_removed_and_reported(dirac):
    f = random_field(G8, 4, 1) + VectorField(G8, np.ones(G8.shape + (4,)))
    Pf, removed = project_null(f)
    assert removed > 1.0
    assert np.max(np.abs(Pf.mean())) < 1e-14
    with pytest.raises(ZeroModeError):
        solve_linear(dirac, f, LinearSolveOptions(zero_mode_policy="reject"))


def test_singular_symbol_detected():
    # symbol xi_1 * I vanishes on the frequencies with xi_1 = 0
    entries = np.zeros((2, 2, 3))
    entries[0, 0, 0] = entries[1, 1, 0] = 1.0
    with pytest.raises(SingularSymbolError):
        solve_linear(EllipticTensor(entries), random_field(G8, 2, 0))


def test_two_dimensional_solve_rejected(cr):
    with pytest.raises(UnsupportedDimensionError):
        solve_linear(cr, random_field(GridSpec.cube(2, 8), 2, 0))


@given(st.integers(0, 10_000))
def test_coercivity(seed):
    A = perturbed_dirac(seed)
    nu = ellipticity_constant(A)
    u = random_field(G8, 4, seed)
    Du = spectral_gradient(u)
    assert norm(apply_operator(A, u)) >= nu * norm(Du) * (1 - 1e-9)


def test_regularized_limit_monotone(dirac):
    g = GridSpec.cube(3, 16)
    f = apply_operator(dirac, random_band_limited(g, 4, np.random.default_rng(2)))
    u = solve_linear(dirac, f)
    errs = [norm(solve_linear(dirac, f, LinearSolveOptions(regularization_m=10.0**e)) - u) / norm(u) for e in range(7)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-8


def test_options_validation():
    with pytest.raises(ValueError):
        LinearSolveOptions(regularization_m=-1.0)
    with pytest.raises(ValueError):
        LinearSolveOptions(zero_mode_policy="ignore")


# ---------------------------------------------------------------- Picard iteration


@pytest.fixture(scope="module")
def ex8_problem():
    A = builtin_tensor("dirac")
    desc = builtin_F("ex8", {"b": 0.2, "c": 0.3}, A)
    u_star, f = manufactured({"seed": 4}, desc, G16)
    return desc, u_star, f


def test_picard_recovers_manufactured(ex8_problem):
    desc, u_star, f = ex8_problem
    u, trace = picard_solve(desc, f, tol=1e-10)
    assert trace.converged
    assert norm(u - u_star, NormKind.LIONS) / norm(u_star, NormKind.LIONS) < 1e-8
    assert trace.max_contraction() <= desc.contraction_bound + 0.02
    assert trace.iterations <= math.ceil(math.log(1e-10) / math.log(0.5)) + 5


def test_picard_uniqueness_from_two_starts(ex8_problem):
    desc, u_star, f = ex8_problem
    tol = 1e-10
    u0, _ = picard_solve(desc, f, tol=tol)
    u1, _ = picard_solve(desc, f, tol=tol, u0=random_band_limited(G16, 4, np.random.default_rng(9), amplitude=5.0))
    assert norm(u0 - u1, NormKind.LIONS) / norm(u0, NormKind.LIONS) <= 10 * tol


def test_picard_non_convergence_carries_trace(ex8_problem):
    desc, _, f = ex8_problem
    with pytest.raises(NonConvergenceError) as info:
        picard_solve(desc, f, max_iter=3)
    assert info.value.trace.iterations == 3
    assert not info.value.trace.converged


def test_picard_warns_on_wrong_constants(dirac):
    # F = 1.8 A:X declared with beta = gamma = 0.1: the true rate is 0.8
    desc = linear_descriptor(dirac, 1.8)
    u_star = random_band_limited(G8, 4, np.random.default_rng(0), kmax=3)
    f = desc.apply(spectral_gradient(u_star))
    with pytest.warns(RuntimeWarning, match="declared constants"):
        u, trace = picard_solve(desc, f, max_iter=400)
    assert trace.warnings


def test_trace_csv_format(ex8_problem):
    desc, _, f = ex8_problem
    _, trace = picard_solve(desc, f, tol=1e-6)
    lines = trace.to_csv({"seed": 4}).splitlines()
    assert lines[0] == '# {"seed": 4}'
    assert lines[1] == "k,residual,a_metric,contraction,mean_mode"
    assert len(lines) == 2 + trace.iterations
    assert lines[2].startswith("1,")


# ---------------------------------------------------------------- comparison estimate


@pytest.mark.parametrize("seed", range(3))
def test_comparison_random_pairs(ex8_problem, seed):
    desc, _, _ = ex8_problem
    u, v = random_field(G8, 4, seed), random_field(G8, 4, seed + 100)
    rep = verify_comparison(desc, u, v)
    assert rep.passed
    assert rep.gradient_gap <= rep.bound


def test_comparison_identical_fields(ex8_problem):
    desc, _, _ = ex8_problem
    u = random_field(G8, 4, 0)
    rep = verify_comparison(desc, u, u)
    assert rep.gradient_gap == 0 and rep.bound == 0


def test_comparison_violation_detected(dirac):
    # F = 0.01 A:X is much flatter than declared, so the estimate must fail
    desc = linear_descriptor(dirac, 0.01)
    with pytest.raises(EstimateViolation) as info:
        verify_comparison(desc, random_field(G8, 4, 0), random_field(G8, 4, 1))
    assert not info.value.report.passed


def test_nearness_inequality(ex8_problem):
    desc, _, _ = ex8_problem
    A = desc.A_ref
    for seed in range(5):
        u, v = random_field(G8, 4, seed), random_field(G8, 4, seed + 50)
        Du, Dv = spectral_gradient(u), spectral_gradient(v)
        Au, Av = apply_operator(A, u), apply_operator(A, v)
        lhs = norm(desc.apply(Du) - desc.apply(Dv) - (Au - Av))
        assert lhs <= desc.contraction_bound * norm(Au - Av) + 1e-9
