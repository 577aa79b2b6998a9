import math

import numpy as np
import pytest

from wwlab.errors import SamplingError, TaylorSignError
from wwlab.fitting import offset_power_fit, power_fit
from wwlab.reduction import (
    W_s_via_commutator,
    build_reduced,
    full_traces,
    gamma_defect_at,
    gronwall_check,
    gronwall_envelope,
    micro_triple,
    recover_unknowns,
    residuals_from_triple,
    state_z_norm,
    symmetrized_residuals,
    symmetrizer,
)
from wwlab.spectral import Field, GridSpec, l2_norm
from wwlab.waterwave import SurfaceState, WaveParams, integrate, rest_state

G = GridSpec(1, 64)
P = WaveParams(delta=0.1)


def wave(amp=0.02, k=1, grid=G, params=P):
    om = math.sqrt(params.g * k * math.tanh(k * params.h))
    x = grid.x[0]
    return SurfaceState(Field(grid, amp * np.cos(k * x)),
                        Field(grid, params.g * amp / om * np.sin(k * x)), params)


def vnorm(vec):
    return math.sqrt(sum(l2_norm(v) ** 2 for v in vec))


def test_rest_reduced_is_zero():
    st = rest_state(G, P)
    r = build_reduced(st, full_traces(st), 0.125, 2.5)
    assert r.norm() == 0.0 and vnorm(r.zeta_s) == 0.0


def test_low_band_annihilation():
    g = GridSpec(1, 16, period=100.0)   # every lattice |xi| <= 0.5 < 1/eps
    st = wave(0.02, 1, grid=g)
    r = build_reduced(st, full_traces(st), 0.5, 2.5)
    assert r.norm() < 1e-14 and vnorm(r.zeta_s) < 1e-14


def test_W_two_paths():
    st = wave(0.01, 10)
    tr = full_traces(st)
    for eps in (0.25, 0.125):
        r = build_reduced(st, tr, eps, 2.5)
        alt = W_s_via_commutator(st, tr, eps, 2.5)
        diff = vnorm([a - b for a, b in zip(r.W_s, alt)])
        assert diff <= 1e-10 * max(vnorm(r.W_s), 1e-300)


def test_symmetrizer_identity():
    st = wave(0.03, 1)
    a = full_traces(st).a
    sym = symmetrizer(a, st.eta)
    xi = G.xi.reshape(1, -1)
    xi = xi[:, np.abs(xi[0]) >= 0.5]
    assert sym.product_defect(xi) <= 1e-8 * a.max_abs()
    assert np.all(sym.q.sample(xi) > 0)


def test_symmetrizer_needs_positive_a():
    st = wave(0.02)
    with pytest.raises(TaylorSignError):
        symmetrizer(Field(G, np.full(G.shape, -1.0)), st.eta)


def test_gamma_defect_rest_and_scaling():
    st = rest_state(G, P)
    assert vnorm(gamma_defect_at(st)) == 0.0
    amps = [0.005, 0.01, 0.02]
    norms = [vnorm(gamma_defect_at(wave(a, 2))) for a in amps]
    assert power_fit(amps, norms).slope == pytest.approx(2.0, abs=0.3)


def test_gamma_defect_deep_water_trend():
    norms = []
    for h in (1.0, 2.0, 4.0, 8.0):
        p = WaveParams(h=h, delta=0.1 * h)
        norms.append(vnorm(gamma_defect_at(wave(0.02, 1, params=p))))
    assert all(b < a for a, b in zip(norms, norms[1:]))


def test_residuals_rest_and_sampling():
    st = rest_state(G, P)
    states = [st.with_fields(st.eta, st.psi, t) for t in (0.0, 0.1, 0.2)]
    rows, _ = symmetrized_residuals(states, 0.125, 2.5)
    assert rows[0]["F1"] == 0.0 and rows[0]["F2"] == 0.0
    with pytest.raises(SamplingError):
        symmetrized_residuals(states[:2], 0.125, 2.5)
    with pytest.raises(SamplingError):
        residuals_from_triple([states[0], states[2], states[1]], 0.125, 2.5)


def test_residual_dt_consistency():
    """Residual at fixed eps converges as the difference step shrinks (order dt^2)."""
    st = wave(0.03, 2)
    vals = []
    for dt in (4e-3, 2e-3, 1e-3):
        F1, F2, _ = residuals_from_triple(micro_triple(st, dt), 0.125, 2.5)
        vals.append(vnorm(F1) + vnorm(F2))
    d1, d2 = abs(vals[0] - vals[1]), abs(vals[1] - vals[2])
    assert d2 <= 0.5 * d1 or d2 <= 1e-8 * vals[-1]


def test_gronwall_envelope_exact():
    t = np.linspace(0, 2, 21)
    k = np.full_like(t, 0.3)
    Y = gronwall_envelope(t, [1.0] + [0] * 20, k, C=0.8)
    c = 0.4
    assert np.allclose(Y, (1.0 + 0.3) * np.exp(c * t) - 0.3, rtol=1e-13)


def test_gronwall_rest_and_linear_wave():
    t = np.linspace(0, 1, 11)
    C, reps = gronwall_check([(t, np.zeros_like(t), np.zeros_like(t))])
    assert C == 0.0 and reps[0].holds
    st = wave(1e-3, 8)
    traj = integrate(st, 1.0, sample_every=4, taylor_every=0)
    energies, knorms = [], []
    for s in traj.states:
        tr = full_traces(s)
        energies.append(build_reduced(s, tr, 0.25, 2.5).norm())
        knorms.append(state_z_norm(s, tr, 2.5, 0.25, power=2))
    energies = np.array(energies)
    assert np.ptp(energies) <= 1e-2 * energies.max()
    C, reps = gronwall_check([(traj.times, energies, knorms)])
    assert reps[0].holds


def test_recovery_rest_and_small_wave():
    st = rest_state(G, P)
    tr = full_traces(st)
    rep = recover_unknowns(build_reduced(st, tr, 0.125, 2.5), st, tr)
    assert rep.lhs == 0.0 and rep.rhs == 0.0 and rep.defect == 0.0
    st = wave(0.02, 3)
    tr = full_traces(st)
    r = build_reduced(st, tr, 0.25, 2.5)
    rep = recover_unknowns(r, st, tr)
    assert rep.lhs > 0 and rep.rhs > 0
    assert rep.eta_defect <= 0.1 * vnorm(r.zeta_s)
    assert rep.psi_defect <= 1e-6 * rep.lhs


def test_offset_power_fit_recovers_parameters():
    eps = np.repeat(2.0 ** -np.arange(3, 7), 3)
    base = np.tile([1.0, 2.0, 4.0], 4)
    lhs = 1.5 * (0.2 * eps ** 0.7 + base)
    C, c_o, kappa = offset_power_fit(eps, lhs, base)
    assert C * (c_o * eps ** kappa + base) == pytest.approx(lhs, rel=0.2)
    assert kappa > 0
