"""
Zakharov system for gravity waves, its trace fields and an RK4 integrator.

    d_t eta = G(eta) psi
    d_t psi = -g eta - |grad psi|^2 / 2 + (G(eta) psi + grad eta . grad psi)^2 / (2 (1 + |grad eta|^2))
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, Optional, Tuple

import numpy as np

from .dno import DEFAULT_NZ, DirichletNeumann, default_delta
from .errors import BlowUpError, ParameterError, TaylorSignError
from .spectral import (
    Field,
    GridSpec,
    fourier_multiplier,
    gradient,
    read_field,
    sobolev_norm,
    write_field,
)


@dataclass(frozen=True)
class WaveParams:
    g: float = 1.0
    h: float = 1.0
    delta: Optional[float] = None
    n_z: int = DEFAULT_NZ
    variant: str = "flat"

    def __post_init__(self):
        if not self.g > 0 or not self.h > 0:
            raise ParameterError("g and h must be positive")

    def resolved(self, eta: Field, s: float = 2.5) -> "WaveParams":
        """Fix delta from the data once, so the map is the same along a run."""
        if self.delta is not None:
            return self
        return replace(self, delta=default_delta(eta, self.h, s))


@dataclass(frozen=True, eq=False)
class SurfaceState:
    eta: Field
    psi: Field
    params: WaveParams = field(default_factory=WaveParams)
    t: float = 0.0

    def __post_init__(self):
        if self.eta.grid != self.psi.grid:
            raise ParameterError("eta and psi live on different grids")
        if self.params.delta is None:
            object.__setattr__(self, "params", self.params.resolved(self.eta))

    @property
    def grid(self) -> GridSpec:
        return self.eta.grid

    def dn(self) -> DirichletNeumann:
        p = self.params
        return DirichletNeumann(self.eta, p.h, p.delta, p.n_z, p.variant)

    def with_fields(self, eta: Field, psi: Field, t: Optional[float] = None) -> "SurfaceState":
        return SurfaceState(eta, psi, self.params, self.t if t is None else t)

    def reversed(self) -> "SurfaceState":
        """(eta, psi) -> (eta, -psi): the time-reversal symmetry."""
        return self.with_fields(self.eta, -self.psi)


@dataclass(frozen=True, eq=False)
class TraceState:
    B: Field
    V: Tuple[Field, ...]
    a: Optional[Field] = None


def rest_state(grid: GridSpec, params: WaveParams = WaveParams()) -> SurfaceState:
    return SurfaceState(grid.zeros(), grid.zeros(), params)


def _dot(u, v):
    out = u[0] * v[0]
    for a, b in zip(u[1:], v[1:]):
        out = out + a * b
    return out


def trace_fields(state: SurfaceState, G: Optional[DirichletNeumann] = None,
                 G_psi: Optional[Field] = None) -> TraceState:
    """B = (grad eta . grad psi + G psi) / (1 + |grad eta|^2), V = grad psi - B grad eta."""
    if G_psi is None:
        G_psi = (G or state.dn())(state.psi)
    ge = gradient(state.eta)
    gp = gradient(state.psi)
    B = (_dot(ge, gp) + G_psi) / (1.0 + _dot(ge, ge))
    V = tuple(p - B * e for p, e in zip(gp, ge))
    return TraceState(B, V)


def zakharov_rhs(state: SurfaceState, G_psi: Optional[Field] = None):
    """(d_t eta, d_t psi)."""
    g = state.params.g
    if G_psi is None:
        G_psi = state.dn()(state.psi)
    ge = gradient(state.eta)
    gp = gradient(state.psi)
    num = G_psi + _dot(ge, gp)
    dpsi = -g * state.eta - 0.5 * _dot(gp, gp) + 0.5 * num * num / (1.0 + _dot(ge, ge))
    return G_psi, dpsi


def _B_only(state):
    return trace_fields(state).B


def material_derivative_B(state: SurfaceState, traces: Optional[TraceState] = None,
                          rel_step: float = 1e-4) -> Field:
    """(d_t + V . grad) B, with d_t B a Richardson-extrapolated central difference
    of (eta, psi) -> B along the Zakharov vector field."""
    traces = traces or trace_fields(state)
    deta, dpsi = zakharov_rhs(state)
    size = max(deta.max_abs(), dpsi.max_abs())
    grid = state.grid
    if size == 0.0:
        dtB = grid.zeros()
    else:
        scale = 1.0 + max(state.eta.max_abs(), state.psi.max_abs())
        eps = rel_step * scale / size

        def central(e):
            plus = state.with_fields(state.eta + e * deta, state.psi + e * dpsi)
            minus = state.with_fields(state.eta - e * deta, state.psi - e * dpsi)
            return (_B_only(plus) - _B_only(minus)) / (2 * e)
        d1 = central(eps)
        d2 = central(eps / 2)
        dtB = (4 * d2 - d1) / 3
    gB = gradient(traces.B)
    return dtB + _dot(traces.V, gB)


def taylor_coefficient(state: SurfaceState, traces: Optional[TraceState] = None) -> Field:
    """a = g + (d_t + V . grad) B."""
    return state.params.g + material_derivative_B(state, traces)


def check_taylor(state: SurfaceState, a: Optional[Field] = None, floor: float = 0.0) -> Field:
    a = a if a is not None else taylor_coefficient(state)
    m = float(np.min(a.values))
    if not m > floor:
        raise TaylorSignError(f"Taylor sign violated at t={state.t:.4g}: min a = {m:.3e}",
                              m, state)
    return a


def conserved_quantities(state: SurfaceState, G_psi: Optional[Field] = None):
    """(H, mass, momentum) with H = <psi, G psi>/2 + (g/2) int eta^2."""
    if G_psi is None:
        G_psi = state.dn()(state.psi)
    g = state.params.g
    H = 0.5 * float(np.real(state.psi.inner(G_psi))) + 0.5 * g * float(
        np.real(state.eta.inner(state.eta)))
    cell = state.grid.cell
    mass = float(np.sum(state.eta.values) * cell)
    mom = tuple(float(np.sum((state.eta * gp).values) * cell) for gp in gradient(state.psi))
    return H, mass, mom


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def cfl_limit(grid: GridSpec, params: WaveParams, c_cfl: float = 0.5) -> float:
    """c / sqrt(g xi_max tanh(xi_max h))."""
    k = grid.xi_max
    return c_cfl / math.sqrt(params.g * k * math.tanh(k * params.h))


def _spectral_filter(grid: GridSpec, kind: Optional[str], dealias: bool):
    mask = np.ones(grid.shape)
    if dealias:
        mask = mask * grid.dealias_mask()
    if kind == "exp":
        j = np.abs(grid.xi) * grid.period / (2 * np.pi) / (grid.n / 2)
        mask = mask * np.exp(-36.0 * np.sum(j ** 36, axis=0))
    elif kind not in (None, "none"):
        raise ParameterError(f"unknown filter {kind!r}")
    if np.all(mask == 1):
        return None
    return mask


def _apply_mask(u: Field, mask) -> Field:
    return u if mask is None else fourier_multiplier(u, mask)


def step(state: SurfaceState, dt: float, dealias: bool = True,
         filter: Optional[str] = None, _mask=None) -> SurfaceState:
    """One classical RK4 step of the Zakharov system."""
    mask = _mask if _mask is not None else _spectral_filter(state.grid, filter, dealias)

    def rhs(s):
        de, dp = zakharov_rhs(s)
        return _apply_mask(de, mask), _apply_mask(dp, mask)

    def shift(c, e):
        return state.with_fields(state.eta + c * e[0], state.psi + c * e[1])
    k1 = rhs(state)
    k2 = rhs(shift(dt / 2, k1))
    k3 = rhs(shift(dt / 2, k2))
    k4 = rhs(shift(dt, k3))
    eta = state.eta + (dt / 6) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    psi = state.psi + (dt / 6) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    return state.with_fields(eta, psi, state.t + dt)


@dataclass
class Trajectory:
    states: List[SurfaceState]
    taylor_min: List[float] = field(default_factory=list)
    steps: int = 0
    dt: float = 0.0
    traces: Optional[List[TraceState]] = None

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]


def integrate(state: SurfaceState, T: float, dt: Optional[float] = None,
              c_cfl: float = 0.5, sample_every: int = 1, dealias: bool = True,
              filter: Optional[str] = None, taylor_every: int = 1,
              callback: Optional[Callable] = None) -> Trajectory:
    """Integrate to time t + T with RK4, recording every ``sample_every`` steps.

    ``dt`` defaults to the CFL limit, shortened to divide T evenly; a given dt
    above the limit raises ``ParameterError``.  ``taylor_every`` sets how often
    the Taylor sign is checked (0 disables).  NaN or overflow raises
    ``BlowUpError`` carrying the last finite state.
    """
    limit = cfl_limit(state.grid, state.params, c_cfl)
    if dt is None:
        dt = limit
    if abs(dt) > limit * (1 + 1e-12):
        raise ParameterError(f"time step {dt:.3e} exceeds the CFL limit {limit:.3e}")
    if T == 0:
        return Trajectory([state], steps=0, dt=0.0)
    nsteps = max(1, int(math.ceil(abs(T) / abs(dt) - 1e-9)))
    dt = T / nsteps
    mask = _spectral_filter(state.grid, filter, dealias)
    traj = Trajectory([state], dt=dt)
    cur = state
    for i in range(1, nsteps + 1):
        nxt = step(cur, dt, _mask=mask)
        if not (np.all(np.isfinite(nxt.eta.values)) and np.all(np.isfinite(nxt.psi.values))):
            raise BlowUpError(f"non-finite state at step {i} (t={nxt.t:.4g})", cur)
        cur = nxt
        if taylor_every and i % taylor_every == 0:
            a = check_taylor(cur)
            traj.taylor_min.append(float(np.min(a.values)))
        if i % sample_every == 0 or i == nsteps:
            traj.states.append(cur)
            if callback is not None:
                callback(cur)
    traj.steps = nsteps
    return traj


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _norm_record(state: SurfaceState, s: float):
    H, mass, mom = conserved_quantities(state)
    return {
        "t": state.t,
        "eta_norm": sobolev_norm(state.eta, s + 0.5),
        "psi_norm": sobolev_norm(state.psi, s + 0.5),
        "H": H,
        "mass": mass,
        "momentum": list(mom),
    }


def save_trajectory(traj: Trajectory, directory, s: float = 2.5, extra=None):
    """Write fields/*.bin snapshots (plus B, V when traces are attached) and
    manifest.json into ``directory``."""
    fdir = os.path.join(directory, "fields")
    os.makedirs(fdir, exist_ok=True)
    records = []
    for i, st in enumerate(traj.states):
        write_field(os.path.join(fdir, f"eta_{i:05d}.bin"), st.eta)
        write_field(os.path.join(fdir, f"psi_{i:05d}.bin"), st.psi)
        if traj.traces is not None:
            tr = traj.traces[i]
            write_field(os.path.join(fdir, f"B_{i:05d}.bin"), tr.B)
            for ax, v in enumerate(tr.V):
                write_field(os.path.join(fdir, f"V{ax}_{i:05d}.bin"), v)
        records.append(_norm_record(st, s))
    p = traj.states[0].params
    manifest = {
        "times": [float(t) for t in traj.times],
        "params": asdict(p),
        "grid": {"d": traj.states[0].grid.d, "n": traj.states[0].grid.n,
                 "period": traj.states[0].grid.period},
        "dt": traj.dt,
        "steps": traj.steps,
        "s": s,
        "snapshots": records,
        "taylor_min": min(traj.taylor_min) if traj.taylor_min else None,
        "has_traces": traj.traces is not None,
    }
    if extra:
        manifest.update(extra)
    # manifest last: its presence marks a completed trajectory
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def load_trajectory(directory) -> Trajectory:
    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    params = WaveParams(**manifest["params"])
    fdir = os.path.join(directory, "fields")
    d = manifest["grid"]["d"]
    states, traces = [], []
    for i, t in enumerate(manifest["times"]):
        eta = read_field(os.path.join(fdir, f"eta_{i:05d}.bin"))
        psi = read_field(os.path.join(fdir, f"psi_{i:05d}.bin"))
        states.append(SurfaceState(eta, psi, params, t))
        if manifest.get("has_traces"):
            B = read_field(os.path.join(fdir, f"B_{i:05d}.bin"))
            V = tuple(read_field(os.path.join(fdir, f"V{ax}_{i:05d}.bin")) for ax in range(d))
            traces.append(TraceState(B, V))
    tm = manifest.get("taylor_min")
    return Trajectory(states, [tm] if tm is not None else [], manifest["steps"],
                      manifest["dt"], traces if manifest.get("has_traces") else None)
