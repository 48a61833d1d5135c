import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fnes import io as fio
from fnes.core import (
    DimensionError,
    EllipticTensor,
    GradientField,
    GridSpec,
    NormKind,
    RealFieldError,
    UnsupportedDimensionError,
    VectorField,
    contract,
    forward,
    inverse_real,
    norm,
    sobolev_exponent,
    spectral_gradient,
    symbol_matrix,
)
from fnes.problems import BUILTIN_TENSORS, builtin_tensor, random_band_limited


# ---------------------------------------------------------------- tensors


def test_contract_cr_on_ones(cr):
    assert np.array_equal(contract(cr, np.ones((2, 2))), [2.0, 0.0])


def test_contract_cr_matches_written_rows(cr):
    X = np.array([[1.0, 2.0], [3.0, 4.0]])
    # row 1: X11 + X22, row 2: -X12 + X21
    assert np.allclose(contract(cr, X), [1.0 + 4.0, -2.0 + 3.0])


def test_symbol_matrix_cr(cr):
    a = np.array([0.6, 0.8])
    S = symbol_matrix(cr, a)
    assert np.allclose(S, [[0.6, 0.8], [-0.8, 0.6]])
    assert math.isclose(np.linalg.det(S), 1.0)


def test_symbol_is_contraction_with_rank_one(dirac, rng):
    a = rng.standard_normal(3)
    eta = rng.standard_normal(4)
    assert np.allclose(symbol_matrix(dirac, a) @ eta, contract(dirac, np.outer(eta, a)))


def test_dirac_symbol_rows_orthogonal(dirac, rng):
    for _ in range(20):
        a = rng.standard_normal(3)
        S = symbol_matrix(dirac, a)
        assert np.allclose(S @ S.T, (a @ a) * np.eye(4), atol=1e-13)


def test_tensor_validation():
    with pytest.raises(DimensionError):
        EllipticTensor(np.zeros((2, 3, 2)))
    with pytest.raises(ValueError):
        EllipticTensor(np.full((2, 2, 2), np.nan))


def test_tensor_hash_and_scaling(cr):
    assert cr == builtin_tensor("cauchy-riemann")
    assert hash(cr) == hash(builtin_tensor("cauchy-riemann"))
    assert np.array_equal((cr * 2.0).entries, 2.0 * cr.entries)


@pytest.mark.parametrize("name", BUILTIN_TENSORS)
def test_tensor_text_round_trip(name, tmp_path):
    A = builtin_tensor(name)
    path = tmp_path / "t.txt"
    fio.write_tensor(path, A)
    B = fio.read_tensor(path)
    assert B.entries.tobytes() == A.entries.tobytes()


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=False), min_size=8, max_size=8))
def test_tensor_text_round_trip_random(vals):
    A = EllipticTensor(np.array(vals).reshape(2, 2, 2))
    assert fio.parse_tensor(fio.format_tensor(A)).entries.tobytes() == A.entries.tobytes()


# ---------------------------------------------------------------- grid and transforms


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec.cube(3, 2)
    with pytest.raises(ValueError):
        GridSpec.cube(3, 8, -1.0)
    with pytest.raises(DimensionError):
        GridSpec((8, 8), (1.0,))


def test_null_modes_include_checkerboards():
    g = GridSpec.cube(3, 8)
    assert g.null_modes().sum() == 8


def test_spectral_gradient_single_mode():
    g = GridSpec((16, 12, 8), (1.0, 2.0, 3.0))
    x = g.coordinates()
    w = 2 * np.pi * np.array([2 / 1.0, 1 / 2.0, 3 / 3.0])
    phase = x @ w
    u = VectorField(g, np.stack([np.sin(phase), np.cos(phase)], axis=-1))
    D = spectral_gradient(u).data
    expect = np.stack([np.cos(phase)[..., None] * w, -np.sin(phase)[..., None] * w], axis=-2)
    assert np.max(np.abs(D - expect)) < 1e-12


def test_forward_inverse_round_trip(rng):
    g = GridSpec.cube(3, 10)
    data = rng.standard_normal(g.shape + (2,))
    back = inverse_real(forward(data, g), g)
    assert np.max(np.abs(back - data)) < 1e-13


def test_inverse_rejects_complex_field(rng):
    g = GridSpec.cube(3, 8)
    c = np.zeros(g.shape + (1,), dtype=complex)
    c[1, 0, 0, 0] = 1.0  # no Hermitian partner
    with pytest.raises(RealFieldError):
        inverse_real(c, g)


def test_plancherel(rng):
    g = GridSpec((8, 6, 10), (1.0, 0.5, 2.0))
    data = rng.standard_normal(g.shape + (3,))
    u = VectorField(g, data)
    spectral = math.sqrt(g.cell_volume / g.size * np.sum(np.abs(forward(data, g)) ** 2))
    assert math.isclose(norm(u), spectral, rel_tol=1e-13)


# ---------------------------------------------------------------- norms


def test_sobolev_exponent():
    assert sobolev_exponent(3) == 6.0
    assert sobolev_exponent(4) == 4.0
    with pytest.raises(UnsupportedDimensionError):
        sobolev_exponent(2)


def test_l2star_gaussian_closed_form():
    # integral of exp(-3|x-c|^2/s^2) over R^3 is (pi s^2/3)^(3/2); M = 64 keeps
    # the rectangle-rule aliasing term exp(-2 pi^2 sigma^2 / h^2) below 1e-30
    g = GridSpec.cube(3, 64, 1.0)
    s = 0.08
    r2 = np.sum((g.coordinates() - 0.5) ** 2, axis=-1)
    u = VectorField(g, np.exp(-r2 / (2 * s**2))[..., None])
    expect = (math.pi * s**2 / 3.0) ** 0.25
    assert math.isclose(norm(u, NormKind.L2STAR), expect, rel_tol=1e-12)


def test_l2_constant_field():
    g = GridSpec((8, 8, 8), (1.0, 2.0, 0.5))
    u = VectorField(g, np.full(g.shape + (2,), 3.0))
    assert math.isclose(norm(u), math.sqrt(9.0 * 2 * 1.0), rel_tol=1e-14)


def test_lions_is_sum(rng):
    g = GridSpec.cube(3, 8)
    u = random_band_limited(g, 2, rng, kmax=3)
    total = norm(u, NormKind.L2STAR) + norm(spectral_gradient(u), NormKind.L2)
    assert norm(u, "LIONS") == total
    with pytest.raises(DimensionError):
        norm(spectral_gradient(u), NormKind.LIONS)


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_norm_homogeneous(seed, t):
    g = GridSpec.cube(3, 6)
    r = np.random.default_rng(seed)
    u = VectorField(g, r.standard_normal(g.shape + (2,)))
    for kind in NormKind:
        assert math.isclose(norm(u * t, kind), t * norm(u, kind), rel_tol=1e-12)


@given(st.integers(0, 10_000))
def test_norm_triangle(seed):
    g = GridSpec.cube(3, 6)
    r = np.random.default_rng(seed)
    u = VectorField(g, r.standard_normal(g.shape + (2,)))
    v = VectorField(g, r.standard_normal(g.shape + (2,)))
    for kind in (NormKind.L2, NormKind.L2STAR):
        assert norm(u + v, kind) <= norm(u, kind) + norm(v, kind) + 1e-12


# ---------------------------------------------------------------- EFOS files


def test_efos_round_trip(tmp_path, rng):
    g = GridSpec((8, 6, 4), (1.0, 2.0, 3.5))
    u = VectorField(g, rng.standard_normal(g.shape + (3,)))
    fio.write_efos(tmp_path / "u.efos", u)
    back = fio.read_efos(tmp_path / "u.efos")
    assert back.grid == g
    assert back.data.tobytes() == u.data.tobytes()
    D = spectral_gradient(u)
    fio.write_efos(tmp_path / "d.efos", D)
    backD = fio.read_efos(tmp_path / "d.efos")
    assert isinstance(backD, GradientField)
    assert backD.data.tobytes() == D.data.tobytes()


def test_efos_rejects_corruption(tmp_path, rng):
    g = GridSpec.cube(3, 4)
    fio.write_efos(tmp_path / "u.efos", VectorField(g, rng.standard_normal(g.shape + (1,))))
    raw = (tmp_path / "u.efos").read_bytes()
    (tmp_path / "bad.efos").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(fio.FormatError):
        fio.read_efos(tmp_path / "bad.efos")
    (tmp_path / "short.efos").write_bytes(raw[:-8])
    with pytest.raises(fio.FormatError):
        fio.read_efos(tmp_path / "short.efos")
