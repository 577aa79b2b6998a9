"""
Symmetrized reduced unknowns of the mollified system and their diagnostics.

With zeta = grad eta and the Friedrichs high-pass K = K_eps,

    zeta_s = K^2 <D>^s zeta
    W_s    = K^2 <D>^s V + T_zeta K^2 <D>^s B
    theta_s = T_q zeta_s,      q = sqrt(a / lambda),   gamma = sqrt(a lambda)

and along solutions

    d_t W_s     + T_V . grad W_s     + T_gamma theta_s = F1
    d_t theta_s + T_V . grad theta_s - T_gamma W_s     = F2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dno import principal_symbol_lambda
from .errors import SamplingError, TaylorSignError
from .paradiff import Symbol, commutator_mollifier, paradiff_apply, paraproduct
from .spectral import (
    Field,
    derivative,
    divergence,
    fourier_multiplier,
    gradient,
    japanese,
    k_symbol,
    l2_norm,
    sobolev_norm,
)
from .waterwave import (
    SurfaceState,
    TraceState,
    step,
    taylor_coefficient,
    trace_fields,
    zakharov_rhs,
)


class TimeDerivativeWarning(UserWarning):
    """Snapshot spacing is too coarse for centered time differences."""


def _abs_pow(xi, p):
    r = np.sqrt(np.sum(xi ** 2, axis=0))
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** p
    return out


def _vec_norm(vec, s=0.0):
    return float(np.sqrt(sum(sobolev_norm(v, s) ** 2 for v in vec)))


def ks_multiplier(grid, eps, s):
    """K_eps^2 <xi>^s on the lattice."""
    return k_symbol(grid, eps, 2) * japanese(grid.xi_abs) ** s


# ---------------------------------------------------------------------------
# symmetrizer
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SymmetrizerPair:
    gamma: Symbol
    q: Symbol
    q_inv: Symbol
    a: Field

    def product_defect(self, xi) -> float:
        """sup |gamma q - a| over the grid and the given xi points."""
        return float(np.max(np.abs(self.gamma.sample(xi) * self.q.sample(xi)
                                   - self.a.values[..., None])))


def symmetrizer(a: Field, eta: Field, regularity: float = 0.5) -> SymmetrizerPair:
    """gamma = sqrt(a lambda), q = sqrt(a / lambda); requires a > 0."""
    amin = float(np.min(a.values))
    if not amin > 0:
        raise TaylorSignError(f"symmetrizer needs a > 0, min a = {amin:.3e}", amin, None)
    grid = a.grid
    ra = Field(grid, np.sqrt(a.values))
    if grid.d == 1:
        gamma = Symbol.separable([(ra, lambda xi: _abs_pow(xi, 0.5))], 0.5, regularity,
                                 name="gamma")
        q = Symbol.separable([(ra, lambda xi: _abs_pow(xi, -0.5))], -0.5, regularity,
                             name="q")
        q_inv = Symbol.separable([(1.0 / ra, lambda xi: _abs_pow(xi, 0.5))], 0.5,
                                 regularity, name="1/q")
        return SymmetrizerPair(gamma, q, q_inv, a)
    lam = principal_symbol_lambda(eta)

    def lam_safe(xi):
        v = lam.sample(xi)
        return np.where(v > 0, v, np.inf)

    av = a.values[..., None]
    gamma = Symbol.general(grid, lambda xi: np.sqrt(av * lam.sample(xi)), 0.5,
                           regularity, name="gamma")
    q = Symbol.general(grid, lambda xi: np.sqrt(av / lam_safe(xi)), -0.5, regularity,
                       name="q")
    q_inv = Symbol.general(grid, lambda xi: np.sqrt(lam.sample(xi) / av), 0.5,
                           regularity, name="1/q")
    return SymmetrizerPair(gamma, q, q_inv, a)


# ---------------------------------------------------------------------------
# reduced state
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReducedState:
    eps: float
    s: float
    W_s: Tuple[Field, ...]
    theta_s: Tuple[Field, ...]
    zeta_s: Tuple[Field, ...]
    sym: Optional[SymmetrizerPair] = None

    def norm(self) -> float:
        """||(W_s, theta_s)||_{L^2 x L^2}."""
        return float(np.sqrt(_vec_norm(self.W_s) ** 2 + _vec_norm(self.theta_s) ** 2))


def build_reduced(state: SurfaceState, traces: TraceState, eps: float, s: float) -> ReducedState:
    """(W_s, theta_s, zeta_s) of one state; ``traces.a`` is computed if missing."""
    grid = state.grid
    a = traces.a if traces.a is not None else taylor_coefficient(state, traces)
    sym = symmetrizer(a, state.eta)
    mult = ks_multiplier(grid, eps, s)
    zeta = gradient(state.eta)
    zeta_s = tuple(fourier_multiplier(z, mult) for z in zeta)
    Bs = fourier_multiplier(traces.B, mult)
    W_s = tuple(fourier_multiplier(v, mult) + paraproduct(z, Bs)
                for v, z in zip(traces.V, zeta))
    theta_s = tuple(paradiff_apply(sym.q, z) for z in zeta_s)
    return ReducedState(eps, s, W_s, theta_s, zeta_s, sym)


def full_traces(state: SurfaceState) -> TraceState:
    tr = trace_fields(state)
    return TraceState(tr.B, tr.V, taylor_coefficient(state, tr))


def W_s_via_commutator(state: SurfaceState, traces: TraceState, eps: float, s: float):
    """W_s = K^2 <D>^s (V + T_zeta B) - [K^2 <D>^s, T_zeta] B."""
    grid = state.grid
    mult = ks_multiplier(grid, eps, s)
    out = []
    for v, z in zip(traces.V, gradient(state.eta)):
        W = v + paraproduct(z, traces.B)
        out.append(fourier_multiplier(W, mult)
                   - commutator_mollifier(z, traces.B, eps, square=True, s=s))
    return tuple(out)


# ---------------------------------------------------------------------------
# residuals of the symmetrized system
# ---------------------------------------------------------------------------

def _transport(V, u: Field) -> Field:
    """T_V . grad u."""
    out = None
    for ax, v in enumerate(V):
        term = paraproduct(v, derivative(u, ax))
        out = term if out is None else out + term
    return out


def _centered(prev, nxt, dt):
    return tuple((b - a) / (2 * dt) for a, b in zip(prev, nxt))


def micro_triple(state: SurfaceState, dt: float = 1e-3) -> List[SurfaceState]:
    """States at t - dt, t, t + dt from one RK4 step each way."""
    fwd = step(state, dt, dealias=False)
    bwd = step(state, -dt, dealias=False)
    return [bwd, state, fwd]


def residuals_from_triple(triple: Sequence[SurfaceState], eps: float, s: float,
                          reduced: Optional[Sequence[ReducedState]] = None):
    """(F1, F2, reduced-at-centre) from three equally spaced states."""
    if len(triple) != 3:
        raise SamplingError("need three consecutive snapshots")
    t0, t1, t2 = (st.t for st in triple)
    dt = 0.5 * (t2 - t0)
    if dt <= 0 or abs((t1 - t0) - (t2 - t1)) > 1e-9 * max(1.0, abs(dt)):
        raise SamplingError("snapshots must be equally spaced and increasing in time")
    if reduced is None:
        reduced = [build_reduced(st, full_traces(st), eps, s) for st in triple]
    r0, r1, r2 = reduced
    centre = triple[1]
    V = trace_fields(centre).V
    dW = _centered(r0.W_s, r2.W_s, dt)
    dth = _centered(r0.theta_s, r2.theta_s, dt)
    gamma = r1.sym.gamma
    F1 = tuple(dw + _transport(V, w) + paradiff_apply(gamma, th)
               for dw, w, th in zip(dW, r1.W_s, r1.theta_s))
    F2 = tuple(dt_ + _transport(V, th) - paradiff_apply(gamma, w)
               for dt_, th, w in zip(dth, r1.theta_s, r1.W_s))
    return F1, F2, r1


def symmetrized_residuals(states: Sequence[SurfaceState], eps: float, s: float,
                          step_dt: Optional[float] = None,
                          traces: Optional[Sequence[TraceState]] = None):
    """Residual norms at every interior snapshot of an evenly sampled run.

    Returns a list of dicts with t, ||F1||, ||F2|| and ||(W_s, theta_s)||.
    Precomputed ``traces`` (with ``a``) can be shared across several eps.
    """
    if len(states) < 3:
        raise SamplingError("need at least three snapshots")
    spacing = states[1].t - states[0].t
    if step_dt is not None and spacing > 4 * step_dt * (1 + 1e-12):
        warnings.warn("snapshot spacing exceeds four integrator steps; "
                      "time differences are inaccurate", TimeDerivativeWarning)
    if traces is None:
        traces = [full_traces(st) for st in states]
    reduced = [build_reduced(st, tr, eps, s) for st, tr in zip(states, traces)]
    rows = []
    for i in range(1, len(states) - 1):
        F1, F2, r = residuals_from_triple(states[i - 1:i + 2], eps, s, reduced[i - 1:i + 2])
        rows.append({"t": states[i].t, "eps": eps, "F1": _vec_norm(F1),
                     "F2": _vec_norm(F2), "energy": r.norm()})
    return rows, reduced


# ---------------------------------------------------------------------------
# gamma defect
# ---------------------------------------------------------------------------

def gamma_defect(triple: Sequence[SurfaceState]) -> Tuple[Field, ...]:
    """(d_t + V . grad) zeta - G(eta) V - zeta G(eta) B at the middle snapshot."""
    if len(triple) != 3:
        raise SamplingError("need three consecutive snapshots")
    prev, cur, nxt = triple
    dt = 0.5 * (nxt.t - prev.t)
    if dt <= 0:
        raise SamplingError("snapshots must be increasing in time")
    G = cur.dn()
    tr = trace_fields(cur, G)
    zeta = gradient(cur.eta)
    dzeta = _centered(gradient(prev.eta), gradient(nxt.eta), dt)
    GB = G(tr.B)
    out = []
    for dz, z in zip(dzeta, zeta):
        conv = dz
        for ax, v in enumerate(tr.V):
            conv = conv + v * derivative(z, ax)
        out.append(conv - z * GB)
    GV = [G(v) for v in tr.V]
    return tuple(o - gv for o, gv in zip(out, GV))


def gamma_defect_at(state: SurfaceState, dt: float = 1e-3):
    return gamma_defect(micro_triple(state, dt))


# ---------------------------------------------------------------------------
# energy and Gronwall
# ---------------------------------------------------------------------------

def z_norm(eta, psi, B, V, s: float, eps: Optional[float] = None, power: int = 1) -> float:
    """||(eta, psi, B, V)||_{Z^s}, optionally of K_eps^power applied to each part."""
    def k(u):
        if eps is None:
            return u
        return fourier_multiplier(u, k_symbol(u.grid, eps, power))
    parts = [sobolev_norm(k(eta), s + 0.5) ** 2, sobolev_norm(k(psi), s + 0.5) ** 2,
             sobolev_norm(k(B), s) ** 2] + [sobolev_norm(k(v), s) ** 2 for v in V]
    return float(np.sqrt(sum(parts)))


def state_z_norm(state: SurfaceState, traces: TraceState, s: float,
                 eps: Optional[float] = None, power: int = 1) -> float:
    return z_norm(state.eta, state.psi, traces.B, traces.V, s, eps, power)


@dataclass
class GronwallReport:
    times: np.ndarray
    energy: np.ndarray
    envelope: np.ndarray
    rate: np.ndarray
    forcing: np.ndarray
    C: float
    holds: bool


def energy_rate(times, energy):
    """d/dt ||(W_s, theta_s)||^2 by centered (one-sided at the ends) differences."""
    return np.gradient(np.asarray(energy) ** 2, np.asarray(times))


def l2_energy_rate(times, energy, k_norm, o_eps: float = 0.0):
    """Per-time ratio rate / ((o + ||K U||_{Z^s} + E) E); its max is the fitted C."""
    times = np.asarray(times, dtype=float)
    energy = np.asarray(energy, dtype=float)
    rate = energy_rate(times, energy)
    rhs = (o_eps + np.asarray(k_norm) + energy) * energy
    ratio = np.where(rhs > 0, rate / np.where(rhs > 0, rhs, 1.0), 0.0)
    return rate, rhs, ratio


def gronwall_envelope(times, energy, k_norm, C: float, o_eps: float = 0.0) -> np.ndarray:
    """Y' = (C/2)(o + k(t) + Y), Y(0) = E(0), integrated exactly for piecewise-linear k."""
    times = np.asarray(times, dtype=float)
    k = np.asarray(k_norm, dtype=float)
    Y = np.empty_like(times)
    Y[0] = energy[0]
    c = 0.5 * C
    for i in range(1, len(times)):
        h = times[i] - times[i - 1]
        f0 = o_eps + k[i - 1]
        f1 = o_eps + k[i]
        if c == 0:
            Y[i] = Y[i - 1]
            continue
        e = np.exp(c * h)
        # exact solution of Y' = c (f(t) + Y) with f linear on the interval
        slope = (f1 - f0) / h if h > 0 else 0.0
        Y[i] = (Y[i - 1] + f0 + slope / c) * e - f0 - slope / c - slope * h
    return Y


def gronwall_check(series, o_eps: float = 0.0, safety: float = 1.0):
    """Fit one C over several (times, energy, k_norm) series and test the envelopes."""
    ratios = []
    for times, energy, k_norm in series:
        _, _, ratio = l2_energy_rate(times, energy, k_norm, o_eps)
        ratios.append(np.max(ratio) if len(ratio) else 0.0)
    C = safety * max(0.0, float(max(ratios)))
    reports = []
    for times, energy, k_norm in series:
        rate, rhs, _ = l2_energy_rate(times, energy, k_norm, o_eps)
        env = gronwall_envelope(times, energy, k_norm, C, o_eps)
        holds = bool(np.all(np.asarray(energy) <= env * (1 + 1e-9) + 1e-300))
        reports.append(GronwallReport(np.asarray(times), np.asarray(energy), env, rate,
                                      np.asarray(k_norm), C, holds))
    return C, reports


# ---------------------------------------------------------------------------
# recovery of the original unknowns
# ---------------------------------------------------------------------------

def e_symbol_inverse(eta: Field) -> Symbol:
    """1/e with e = -lambda + i zeta . xi, zeta = grad eta."""
    grid = eta.grid
    lam = principal_symbol_lambda(eta)
    zeta = np.array([z.values for z in gradient(eta)])

    def sampler(xi):
        e = -lam.sample(xi) + 1j * np.tensordot(zeta, xi, axes=(0, 0))
        return np.where(np.abs(e) > 0, 1.0 / np.where(np.abs(e) > 0, e, 1.0), 0.0)
    return Symbol.general(grid, sampler, -1.0, 0.5, name="1/e")


@dataclass
class RecoveryReport:
    eps: float
    lhs: float            # ||K^2 U||_{Z^s}
    rhs: float            # ||(W_s, theta_s)||
    eta_defect: float     # ||zeta_s - T_{1/q} theta_s||_{H^{-1/2}}
    B_defect: float       # ||K^2 (B - T_{1/e} div W)||_{H^s}
    V_defect: float       # ||K^2 (V - W + T_zeta T_{1/e} div W)||_{H^s}
    psi_defect: float     # ||K^2 (grad psi - V - B grad eta)||_{H^{s-1/2}}

    @property
    def defect(self) -> float:
        return float(np.sqrt(self.eta_defect ** 2 + self.B_defect ** 2
                             + self.V_defect ** 2 + self.psi_defect ** 2))

    def as_dict(self):
        return {"eps": self.eps, "lhs": self.lhs, "rhs": self.rhs,
                "eta_defect": self.eta_defect, "B_defect": self.B_defect,
                "V_defect": self.V_defect, "psi_defect": self.psi_defect,
                "defect": self.defect}


def recover_unknowns(reduced: ReducedState, state: SurfaceState,
                     traces: TraceState) -> RecoveryReport:
    """Both sides of the reduced/original norm comparison and the recovery defects."""
    eps, s = reduced.eps, reduced.s
    grid = state.grid
    k2 = k_symbol(grid, eps, 2)
    ks = ks_multiplier(grid, eps, 0.0)
    zeta = gradient(state.eta)
    eta_rec = [paradiff_apply(reduced.sym.q_inv, th) for th in reduced.theta_s]
    eta_def = _vec_norm([z - r for z, r in zip(reduced.zeta_s, eta_rec)], -0.5)
    W = tuple(v + paraproduct(z, traces.B) for v, z in zip(traces.V, zeta))
    B_rec = paradiff_apply(e_symbol_inverse(state.eta), divergence(W))
    B_def = sobolev_norm(fourier_multiplier(traces.B - B_rec, ks), s)
    V_rec = [w - paraproduct(z, B_rec) for w, z in zip(W, zeta)]
    V_def = _vec_norm([fourier_multiplier(v - r, k2) for v, r in zip(traces.V, V_rec)], s)
    psi_id = [fourier_multiplier(gp - v - traces.B * z, k2)
              for gp, v, z in zip(gradient(state.psi), traces.V, zeta)]
    psi_def = _vec_norm(psi_id, s - 0.5)
    lhs = state_z_norm(state, traces, s, eps, power=2)
    return RecoveryReport(eps, lhs, reduced.norm(), eta_def, B_def, V_def, psi_def)
