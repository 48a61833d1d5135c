import json
import math

import numpy as np
import pytest

from fnes import io as fio
from fnes.core import GridSpec, NormKind, VectorField, contract, forward, norm
from fnes.expr import ExpressionError, compile_expression
from fnes.problems import (
    BUILTIN_FAMILIES,
    ProblemSpec,
    builtin_F,
    builtin_tensor,
    ex8_witness,
    manufactured,
    parse_alpha,
    random_band_limited,
    reproduce_example,
    resolve_tensor,
)
from fnes.solver import picard_solve

from test_conditions import FAMILY_PARAMS


def test_cr_rows(cr):
    assert np.array_equal(cr.as_matrix(), [[1, 0, 0, 1], [0, -1, 1, 0]])


def test_dirac_shape(dirac):
    assert (dirac.N, dirac.n) == (4, 3)


def test_unknown_names():
    with pytest.raises(KeyError):
        builtin_tensor("laplace")
    with pytest.raises(KeyError):
        builtin_F("cubic", {}, builtin_tensor("dirac"))


def test_resolve_tensor_forms(tmp_path, cr):
    assert resolve_tensor("cauchy-riemann") == cr
    w = resolve_tensor("cr-weighted:1,2,3,4")
    assert w == builtin_tensor("cr-weighted", {"kappa": 1, "lam": 2, "mu": 3, "nu0": 4})
    fio.write_tensor(tmp_path / "t.txt", cr)
    assert resolve_tensor("t.txt", str(tmp_path)) == cr


def test_ex8_parameters_validated(cr):
    with pytest.raises(ValueError):
        builtin_F("ex8", {"b": 0.6, "c": 0.45}, cr)


# ---------------------------------------------------------------- witness and examples


def test_ex8_witness_values(cr):
    zeta, Y0 = ex8_witness(0.5, 0.45)
    assert math.isclose(zeta, 0.5 / math.sqrt(0.155), rel_tol=1e-15)
    assert abs(zeta - 1.270) < 1e-3
    AY = contract(cr, Y0)
    assert np.allclose(AY, [2 * zeta, 0.0])
    nY, nAY = np.linalg.norm(Y0), np.linalg.norm(AY)
    assert abs(0.5 * nY + 0.45 * nAY - nY) < 1e-12
    assert abs(0.25 * nY**2 - 0.45**2 * nAY**2) < 1e-12


def test_ex8_witness_needs_large_c():
    with pytest.raises(ValueError):
        ex8_witness(0.1, 0.5)


def test_reproduce_ex9():
    rep = reproduce_example("ex9")
    assert rep["ok"]
    assert abs(rep["K_defect"] - 2.0) < 1e-12
    assert abs(rep["nu_X0"] - 2.0) < 1e-12
    assert rep["admissible_beta_exists"] is False


def test_reproduce_ex9_rejects_alpha():
    with pytest.raises(ValueError):
        reproduce_example("ex9", {"alpha": 0.75})


def test_reproduce_ex8():
    rep = reproduce_example("ex8")
    assert rep["ok"] and all(c["ok"] for c in rep["checks"])


def test_reproduce_pm_constants():
    rep = reproduce_example("pm-constants")
    assert len(rep["table"]) == 100
    assert rep["ok"]


def test_reproduce_unknown():
    with pytest.raises(KeyError):
        reproduce_example("ex10")


# ---------------------------------------------------------------- manufactured fields


def test_band_limited_is_mean_zero_and_resolved():
    g = GridSpec.cube(3, 16)
    u = random_band_limited(g, 2, np.random.default_rng(0), modes=20, kmax=4)
    assert np.max(np.abs(u.mean())) < 1e-13
    spec = np.abs(forward(u.data, g))
    nonzero = np.argwhere(spec.max(axis=-1) > 1e-10)
    assert len(nonzero) <= 40  # each real mode occupies +k and -k


def test_manufactured_zero_gives_zero(dirac):
    desc = builtin_F("ex8", {"b": 0.2, "c": 0.3}, dirac)
    g = GridSpec.cube(3, 8)
    u, f = manufactured(VectorField.zeros(g, 4), desc, g)
    assert np.all(f.data == 0)


@pytest.mark.parametrize("family", BUILTIN_FAMILIES)
def test_manufactured_loop_closes(family, dirac):
    g = GridSpec.cube(3, 32)
    desc = builtin_F(family, FAMILY_PARAMS[family], dirac, g.lengths)
    u_star, f = manufactured({"seed": 11}, desc, g)
    tol = 1e-10
    u, trace = picard_solve(desc, f, tol=tol, max_iter=400)
    assert norm(u - u_star, NormKind.LIONS) / norm(u_star, NormKind.LIONS) <= 100 * tol


# ---------------------------------------------------------------- alpha and expressions


def test_expression_evaluator():
    f = compile_expression("1 + 0.5*sin(2*pi*x1/L)", (2.0, 2.0, 2.0))
    x = np.array([[0.5, 0.0, 0.0]])
    assert math.isclose(f(x)[0], 1.5)
    for bad in ("__import__('os')", "x9", "open(1)", "x1.real", "[1]"):
        with pytest.raises(ExpressionError):
            compile_expression(bad, (1.0, 1.0, 1.0))


def test_parse_alpha_bounds():
    fn, amax, iamax, spec = parse_alpha({"expr": "2 + cos(2*pi*x2)"}, (1.0, 1.0, 1.0))
    assert math.isclose(amax, 3.0)
    assert math.isclose(1 / iamax, 1.0)
    with pytest.raises(ValueError):
        parse_alpha({"expr": "sin(2*pi*x1)"}, (1.0, 1.0, 1.0))


# ---------------------------------------------------------------- problem files


def test_problem_round_trip(tmp_path):
    d = {
        "tensor": "dirac",
        "F": {"family": "lipschitz-perturbation", "beta": 0.3, "phi": "tanh"},
        "grid": {"n": 3, "M": 8, "L": 2.0},
        "rhs": {"manufactured": {"kmax": 2}},
        "seed": 5,
    }
    path = tmp_path / "p.json"
    path.write_text(json.dumps(d))
    spec = ProblemSpec.load(path)
    desc = spec.descriptor()
    assert math.isclose(desc.gamma, 0.35)
    assert spec.grid_spec() == GridSpec.cube(3, 8, 2.0)
    f, u_star = spec.right_hand_side(desc)
    assert u_star is not None and f.N == 4
    assert ProblemSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_problem_expression_rhs():
    spec = ProblemSpec.from_dict(
        {"tensor": "dirac", "grid": {"n": 3, "M": 8}, "rhs": {"expr": ["sin(2*pi*x1)", "0", "0", "cos(2*pi*x3)"]}}
    )
    f, u_star = spec.right_hand_side()
    assert u_star is None
    assert math.isclose(f.data[2, 0, 0, 0], 1.0, abs_tol=1e-15)


def test_problem_unknown_key():
    with pytest.raises(ValueError):
        ProblemSpec.from_dict({"tensr": "dirac"})
