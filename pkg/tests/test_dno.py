import numpy as np
import pytest

from wwlab.dno import (
    DirichletNeumann,
    StripField,
    build_straightening,
    chebyshev,
    dirichlet_neumann,
    dn_remainder,
    elliptic_coeffs,
    good_unknown_surface,
    lifting_symbol_A,
    principal_symbol_lambda,
    solve_strip,
    strip_residual,
    variational_ratio,
)
from wwlab.errors import DiffeomorphismError, ParameterError
from wwlab.spectral import Field, GridSpec, japanese, l2_norm, sobolev_norm

G = GridSpec(1, 64)
G2 = GridSpec(2, 16)


def cos_field(grid, k, amp=1.0):
    return grid.field(lambda x, *rest: amp * np.cos(k * x))


def band_limited(grid, rng, band):
    c = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    c[grid.xi_abs > band] = 0
    c = 0.5 * (c + np.conj(c[grid.negate_index]))
    return Field.from_coeffs(grid, c, real=True)


def test_chebyshev_exact_on_polynomials():
    z, D, w = chebyshev(24)
    assert z[0] == 0.0 and z[-1] == pytest.approx(-1.0)
    for p in range(0, 20):
        assert np.max(np.abs(D @ z ** p - p * z ** max(p - 1, 0) * (p > 0))) < 1e-10
    assert np.sum(w) == pytest.approx(1.0, abs=1e-14)
    assert np.dot(w, z ** 3) == pytest.approx(-0.25, abs=1e-14)


def test_straightening_flat_and_constant():
    m = build_straightening(G.zeros(), h=1.0, delta=0.1)
    z = m.z[:, None]
    assert np.allclose(m.rho, z * 1.0, atol=1e-14)
    assert np.allclose(m.rho_z, 1.0)
    # <D> acts on constants as <0> = 1, so e^{delta z <D>} c = e^{delta z} c
    c = Field(G, np.full(G.shape, 0.3))
    ms = build_straightening(c, h=2.0, delta=0.1, variant="strip")
    z = ms.z[:, None]
    exact = (1 + z) * np.exp(0.1 * z) * 0.3 - z * (np.exp(-(1 + z) * 0.1) * 0.3 - 2.0)
    assert np.allclose(ms.rho, exact, atol=1e-13)
    assert np.allclose(ms.rho[0], 0.3) and np.allclose(ms.rho[-1], 0.3 - 2.0)
    assert abs(ms.min_rho_z - 2.0) < 0.1


@pytest.mark.parametrize("variant", ["flat", "strip"])
def test_straightening_small_wave(variant):
    eta = cos_field(G, 1, 0.05)
    m = build_straightening(eta, h=1.0, delta=0.1, variant=variant)
    assert m.min_rho_z > 0.9
    assert np.max(np.abs(m.rho[0] - eta.values)) < 1e-10


def test_straightening_failure():
    with pytest.raises(DiffeomorphismError):
        build_straightening(cos_field(G, 1, 3.0), h=1.0, delta=0.1)
    with pytest.raises(ParameterError):
        build_straightening(G.zeros(), h=-1.0)


def test_elliptic_coeffs_flat():
    for h in (1.0, 2.0):
        c = elliptic_coeffs(build_straightening(G.zeros(), h=h, delta=0.1))
        assert np.allclose(c.alpha, h ** 2, atol=1e-10)
        assert np.max(np.abs(c.beta)) < 1e-10 and np.max(np.abs(c.gamma)) < 1e-10


def test_gamma_two_ways():
    m = build_straightening(cos_field(G, 1, 0.05), h=1.0, delta=0.1)
    c = elliptic_coeffs(m)
    assert c.alpha.min() > 0
    # substitute rho into the operator: (d_z^2 + alpha Lap + beta.grad d_z) rho / d_z rho
    _, Dz, _ = chebyshev(m.n_z)
    rz = Dz @ m.rho
    rzz = Dz @ rz
    k = G.xi[0]
    lap = np.fft.ifft(-(k ** 2) * np.fft.fft(m.rho, axis=1), axis=1).real
    grz = np.fft.ifft(1j * k * np.fft.fft(rz, axis=1), axis=1).real
    alt = (rzz + c.alpha * lap + c.beta[0] * grz) / rz
    assert np.max(np.abs(alt - c.gamma)) < 1e-8


def test_solve_strip_oracles():
    coeffs = elliptic_coeffs(build_straightening(G.zeros(), h=1.0, delta=0.1))
    f = Field(G, np.full(G.shape, 1.7))
    v = solve_strip(coeffs, f)
    assert np.max(np.abs(v.values - 1.7)) < 1e-10
    for k in (1, 5, 12):
        v = solve_strip(coeffs, cos_field(G, k))
        z = v.z[:, None]
        exact = np.cos(k * G.x[0])[None, :] * np.cosh(k * (z + 1)) / np.cosh(k)
        assert np.max(np.abs(v.values - exact)) < 1e-9
        assert np.array_equal(v.values[0], cos_field(G, k).values)
        assert np.max(np.abs(v.dz[-1])) < 1e-9
    f = G.mode(3) + G.mode(7)
    v = solve_strip(coeffs, f)
    sup = solve_strip(coeffs, G.mode(3)).values + solve_strip(coeffs, G.mode(7)).values
    assert np.max(np.abs(v.values - sup)) < 1e-10


def test_solve_strip_residual_on_wavy_surface():
    coeffs = elliptic_coeffs(build_straightening(cos_field(G, 1, 0.05), h=1.0, delta=0.1))
    f = cos_field(G, 3)
    v = solve_strip(coeffs, f)
    assert strip_residual(coeffs, v) <= 1e-8 * np.max(np.abs(f.values)) * 9


def test_strip_field_round_trip():
    coeffs = elliptic_coeffs(build_straightening(G.zeros(), h=1.0, delta=0.1))
    v = solve_strip(coeffs, cos_field(G, 2))
    back = StripField.from_bytes(v.to_bytes())
    assert np.array_equal(back.values, v.values)


@pytest.mark.parametrize("h", [0.5, 1.0, 2.0])
def test_flat_dn_oracle(h):
    for k in (1, 4, 9):
        Gf = dirichlet_neumann(G.zeros(), cos_field(G, k), h=h, delta=0.1)
        exact = k * np.tanh(k * h) * np.cos(k * G.x[0])
        assert np.max(np.abs(Gf.values - exact)) <= 1e-8 * k


def test_dn_constants_symmetry_positivity():
    rng = np.random.default_rng(0)
    eta = cos_field(G, 1, 0.05)
    dn = DirichletNeumann(eta, h=1.0)
    c = Field(G, np.full(G.shape, 2.0))
    assert l2_norm(dn(c)) <= 1e-10 * l2_norm(c)
    for _ in range(4):
        f, g = band_limited(G, rng, 8), band_limited(G, rng, 8)
        Gf, Gg = dn(f), dn(g)
        lhs = abs(Gf.inner(g) - f.inner(Gg))
        assert lhs <= 1e-8 * sobolev_norm(f, 0.5) * sobolev_norm(g, 0.5)
        assert np.real(Gf.inner(f)) >= -1e-10


def test_dn_linear_in_f():
    eta = cos_field(G, 2, 0.04)
    dn = DirichletNeumann(eta)
    f, g = cos_field(G, 3), G.field(lambda x: np.sin(5 * x))
    lhs = dn(f * 2.0 - g)
    rhs = dn(f) * 2.0 - dn(g)
    assert np.max(np.abs((lhs - rhs).values)) < 1e-9


def test_dn_two_dimensional_flat():
    f = G2.field(lambda x, y: np.cos(x + 2 * y))
    Gf = dirichlet_neumann(G2.zeros(), f, h=1.0, delta=0.1, n_z=24)
    k = np.sqrt(5.0)
    assert np.max(np.abs(Gf.values - k * np.tanh(k) * f.values)) < 1e-8


def test_variational_ratio_bounded():
    eta = cos_field(G, 1, 0.05)
    dn = DirichletNeumann(eta)
    ratios = [variational_ratio(dn.coeffs, dn.extension(cos_field(G, k)), cos_field(G, k))
              for k in (2, 4, 8, 16)]
    assert max(ratios) / min(ratios) < 3


def test_lambda_symbol():
    eta = cos_field(G, 1, 0.3)
    lam = principal_symbol_lambda(eta)
    xi = np.array([[-3.0, 0.5, 7.0]])
    assert np.array_equal(lam.sample(xi), np.broadcast_to(np.abs(xi[0]), G.shape + (3,)))
    flat2 = principal_symbol_lambda(G2.zeros())
    xi2 = np.array([[1.0, 3.0], [2.0, -1.0]])
    assert np.allclose(flat2.sample(xi2), np.sqrt(np.sum(xi2 ** 2, axis=0)))
    # grad eta = (1, 0) at x = 0 for eta = sin(x)
    lam2 = principal_symbol_lambda(G2.field(lambda x, y: np.sin(x)))
    got = lam2.sample(xi2)[0, 0]
    assert np.allclose(got, np.sqrt(xi2[0] ** 2 + 2 * xi2[1] ** 2))


def test_lifting_symbol():
    xi = np.array([[0.0, 2.0, -5.0]])
    for h in (1.0, 2.0):
        coeffs = elliptic_coeffs(build_straightening(G.zeros(), h=h, delta=0.1))
        A = lifting_symbol_A(coeffs)
        assert np.allclose(A.sample(xi), h * japanese(np.abs(xi[0])), atol=1e-10)
    coeffs = elliptic_coeffs(build_straightening(cos_field(G, 1, 0.05), h=1.0, delta=0.1))
    A = lifting_symbol_A(coeffs)
    a = A.sample(np.array([[4.0]]))[:, 0]
    b = coeffs.beta[0, 0] * 4.0
    assert np.allclose(a, 0.5 * (-1j * b + np.sqrt(4 * coeffs.alpha[0] * 17 - b ** 2)))
    assert np.all(A.sample(xi[:, 1:]).real >= 0.5 * np.abs(xi[0, 1:]))


def test_good_unknown_flat_mode():
    coeffs = elliptic_coeffs(build_straightening(G.zeros(), h=1.0, delta=0.1))
    for k in (4, 12):
        v = solve_strip(coeffs, cos_field(G, k))
        w = good_unknown_surface(v, coeffs)
        exact = (k * np.tanh(k) - np.sqrt(1 + k * k)) * np.cos(k * G.x[0])
        assert np.max(np.abs(w.values - exact)) < 1e-8
    v = solve_strip(coeffs, Field(G, np.ones(G.shape)))
    assert good_unknown_surface(v, coeffs).max_abs() < 1e-10


def test_flat_remainder_oracle():
    g = GridSpec(1, 128)
    for k in (8, 16):
        f = cos_field(g, k)
        R = dn_remainder(g.zeros(), f, h=1.0, delta=0.1)
        exact = (np.tanh(k) - 1.0) * k * f.values
        assert np.max(np.abs(R.values - exact)) < 1e-8
    assert dn_remainder(cos_field(g, 1, 0.05), Field(g, np.ones(g.shape))).max_abs() < 1e-10
