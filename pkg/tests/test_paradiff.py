import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wwlab.errors import GridMismatchError, UnsupportedOrderError
from wwlab.paradiff import (
    ParaCutoffs,
    Symbol,
    bony_remainder,
    commutator_mollifier,
    compose_symbols,
    dealiased_product,
    estimate_seminorm,
    paradiff_apply,
    paradiff_matrix,
    paraproduct,
    paraproduct_bruteforce,
)
from wwlab.fitting import power_fit
from wwlab.spectral import (
    DyadicLadder,
    Field,
    GridSpec,
    fourier_multiplier,
    japanese,
    k_eps,
    l2_norm,
    sobolev_norm,
)

G64 = GridSpec(1, 64)


def rel(a, b):
    return np.max(np.abs(a.values - b.values)) / max(np.max(np.abs(b.values)), 1e-300)


def high_freq(grid, rng, low=4):
    c = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    c[grid.xi_abs < low] = 0
    c[grid.nyquist] = 0
    c = 0.5 * (c + np.conj(c[grid.negate_index]))
    return Field.from_coeffs(grid, c, real=True)


def test_cutoff_plateaus():
    cut = ParaCutoffs(G64)
    assert np.all(cut.psi(np.array([0.0, 0.1, 0.2])) == 0.0)
    assert np.all(cut.psi(np.array([0.25, 1.0, 30.0])) == 1.0)
    # chi = 1 well inside the low band of block k, 0 well outside
    ladder = DyadicLadder(G64)
    for k in range(3, ladder.k_max):
        eta = 1.5 * 2.0 ** k
        if ladder.phi_k(k, eta) != 1.0:
            continue
        assert cut.chi(1.1 * 2.0 ** (k - 3), eta) == pytest.approx(1.0)
        assert cut.chi(1.9 * 2.0 ** (k - 3), eta) == pytest.approx(0.0)


def test_seminorm_examples():
    one = Symbol.multiplier(G64, lambda xi: np.ones(xi.shape[1]), 0.0)
    for rho in (0.0, 0.5, 1.0):
        assert estimate_seminorm(one, 0.0, rho) == pytest.approx(1.0)
    jap = Symbol.multiplier(G64, lambda xi: japanese(np.abs(xi[0])), 1.0)
    val = estimate_seminorm(jap, 1.0, 0.0)
    assert np.isfinite(val) and val >= 1.0 - 1e-12
    sinx = Symbol.coefficient(G64.field(np.sin))
    assert estimate_seminorm(sinx, 0.0, 0.0) == pytest.approx(1.0, rel=1e-3)
    assert estimate_seminorm(sinx, 0.0, 1.0) >= 1.0


def test_paraproduct_of_one_on_high_frequencies():
    rng = np.random.default_rng(0)
    u = high_freq(G64, rng, low=1)
    one = Field(G64, np.ones(G64.shape))
    assert rel(paraproduct(one, u), u) < 1e-13
    assert paraproduct(G64.field(np.cos), G64.zeros()).max_abs() == 0.0


def test_paraproduct_single_modes():
    a = G64.mode(1)
    u = G64.mode(16)
    ladder = DyadicLadder(G64)
    coeff = sum(ladder.kappa_k(k - 3, 2 * np.pi / G64.period) * ladder.phi_k(k, 16.0)
                for k in range(ladder.k_max + 1))
    expect = coeff * G64.mode(17).values
    got = paraproduct(a, u)
    assert np.max(np.abs(got.values - expect)) < 1e-13
    assert rel(paraproduct_bruteforce(a, u), got) < 1e-12


def test_mode_32_against_double_sum():
    g = GridSpec(1, 128)
    a, u = g.mode(1), g.mode(32)
    assert rel(paraproduct(a, u), paraproduct_bruteforce(a, u)) < 1e-10


def test_general_symbol_matches_dense():
    g = GridSpec(1, 128)
    sinx = g.field(np.sin)
    sym = Symbol.general(g, lambda xi: sinx.values[:, None] * np.abs(xi[0])[None, :], 1.0, 1.0)
    u = g.mode(32)
    blk = paradiff_apply(sym, u, method="blockwise")
    dense = paradiff_apply(sym, u, method="dense")
    assert rel(blk, dense) <= 1e-10


def test_multiplier_reduction():
    rng = np.random.default_rng(1)
    u = high_freq(G64, rng)
    sym = Symbol.multiplier(G64, lambda xi: japanese(np.abs(xi[0])) ** 1.5, 1.5)
    direct = fourier_multiplier(u, japanese(G64.xi_abs) ** 1.5)
    assert rel(paradiff_apply(sym, u), direct) < 1e-12
    assert rel(paradiff_apply(sym, u, method="blockwise"), direct) < 1e-12


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        paraproduct(G64.mode(1), GridSpec(1, 32).mode(1))


def test_bony_constant_and_symmetry():
    rng = np.random.default_rng(2)
    u = high_freq(G64, rng)
    c = Field(G64, np.full(G64.shape, 3.0))
    assert l2_norm(bony_remainder(c, u)) < 1e-12 * l2_norm(u)
    for _ in range(5):
        a = Field(G64, rng.normal(size=G64.shape))
        b = Field(G64, rng.normal(size=G64.shape))
        assert np.max(np.abs((bony_remainder(a, b) - bony_remainder(b, a)).values)) < 1e-12


def test_bony_single_mode_against_brute_force():
    e2 = G64.mode(2)
    direct = dealiased_product(e2, e2) - 2 * paraproduct_bruteforce(e2, e2)
    assert rel(bony_remainder(e2, e2), direct) < 1e-12


def test_compose_examples():
    sinx = G64.field(np.sin)
    cosx = G64.field(np.cos)
    a = Symbol.general(G64, lambda xi: sinx.values[:, None] * np.abs(xi[0]), 1.0, 2.0)
    b = Symbol.general(G64, lambda xi: cosx.values[:, None] * np.abs(xi[0]), 1.0, 2.0)
    xi = np.array([[3.0, 5.0, -7.0]])
    prod = compose_symbols(a, b, 1.0)
    assert np.allclose(prod.sample(xi), a.sample(xi) * b.sample(xi))
    sharp = compose_symbols(a, b, 2.0)
    x = G64.x[0][:, None]
    xs = xi[0][None, :]
    # d_xi |xi| = sign(xi); d_x cos x = -sin x
    hand = np.sin(x) * np.cos(x) * xs ** 2 - 1j * np.sign(xs) * np.sin(x) * (-np.sin(x)) * np.abs(xs)
    assert np.allclose(sharp.sample(xi), hand, atol=1e-10)
    jap = Symbol.multiplier(G64, lambda z: japanese(np.abs(z[0])), 1.0)
    assert np.allclose(compose_symbols(jap, jap, 2.0).sample(xi), japanese(np.abs(xs)) ** 2
                       * np.ones_like(x), atol=1e-10)
    with pytest.raises(UnsupportedOrderError):
        compose_symbols(a, b, 2.5)


def test_commutators():
    g = GridSpec(1, 256)
    u = g.mode(40) + g.mode(-40)
    m = Symbol.multiplier(g, lambda xi: japanese(np.abs(xi[0])) ** 0.5, 0.5)
    assert commutator_mollifier(m, u, 0.05).max_abs() < 1e-13
    a = g.field(np.sin)
    two_path = k_eps(paraproduct(a, u), 0.05) - paraproduct(a, k_eps(u, 0.05))
    got = commutator_mollifier(a, u, 0.05)
    assert np.max(np.abs((got - two_path).values)) < 1e-12


def test_commutator_rate_positive():
    g = GridSpec(1, 2048)
    a_field = g.field(np.sin)
    sym = Symbol.separable([(a_field, lambda xi: japanese(np.abs(xi[0])) ** 0.5)], 0.5, 10.0)
    c = japanese(g.xi_abs) ** (-1.6)
    c[g.nyquist] = 0
    u = Field.from_coeffs(g, c, real=True)
    eps = 2.0 ** -np.arange(3, 9)
    norms = [l2_norm(commutator_mollifier(sym, u, e)) for e in eps]
    assert power_fit(eps, norms).slope > 0


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2 ** 31))
def test_paraproduct_bilinear(seed):
    rng = np.random.default_rng(seed)
    a, b, u = (Field(G64, rng.normal(size=G64.shape)) for _ in range(3))
    lhs = paraproduct(a * 2.0 + b, u)
    rhs = paraproduct(a, u) * 2.0 + paraproduct(b, u)
    assert np.allclose(lhs.values, rhs.values, atol=1e-12)


def test_operator_norm_scaling():
    """||T_a u||_{H^mu} <= C ||a||_inf ||u||_{H^mu} with one C over 50 draws."""
    rng = np.random.default_rng(3)
    ratios = []
    for _ in range(50):
        a = Field(G64, rng.normal(size=G64.shape))
        u = Field(G64, rng.normal(size=G64.shape))
        ratios.append(sobolev_norm(paraproduct(a, u), 1.0)
                      / (a.max_abs() * sobolev_norm(u, 1.0)))
    assert max(ratios) < 5.0


def test_dense_matrix_shape():
    M = paradiff_matrix(Symbol.coefficient(GridSpec(1, 16).field(np.cos)))
    assert M.shape == (16, 16)
