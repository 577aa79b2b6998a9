"""
Dirichlet-Neumann operator through a straightened strip.

The fluid region {rho(x,-1) < y < eta(x)} is mapped to x in the torus and
z in [-1, 0] by y = rho(x, z).  The harmonic extension v of the surface data
solves the transformed elliptic problem

    (d_z^2 + alpha Lap + beta . grad d_z - gamma d_z) v = F0,   v(z=0) = f,

with the conormal condition zeta1 d_z v - zeta2 . grad v = 0 at z = -1, and

    G(eta) f = zeta1 d_z v - zeta2 . grad v   at z = 0.

z is discretized by Chebyshev collocation, x spectrally.  The linear system is
solved by GMRES preconditioned with the flat-surface operator, which is exactly
block-diagonal in the x-frequency.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (
    DiffeomorphismError,
    GridMismatchError,
    ParameterError,
    SingularSystemError,
    SymbolEllipticityError,
)
from .paradiff import Symbol, paradiff_apply
from .spectral import Field, GridSpec, japanese, sobolev_norm

DEFAULT_NZ = 48


# ---------------------------------------------------------------------------
# Chebyshev utilities on [-1, 0]
# ---------------------------------------------------------------------------

@lru_cache(maxsize=16)
def chebyshev(n_z: int):
    """Gauss-Lobatto nodes z_j = (cos(pi j/(n_z-1)) - 1)/2, d/dz matrix, weights.

    z_0 = 0 is the surface and z_{n_z-1} = -1 the bottom.  The weights are
    Clenshaw-Curtis weights for integration over [-1, 0].
    """
    if n_z < 4:
        raise ParameterError("need at least 4 Chebyshev nodes")
    N = n_z - 1
    j = np.arange(n_z)
    t = np.cos(np.pi * j / N)
    c = np.ones(n_z)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dt = t[:, None] - t[None, :]
    D = np.outer(c, 1.0 / c) / (dt + np.eye(n_z))
    D -= np.diag(D.sum(axis=1))

    theta = np.pi * j / N
    w = np.zeros(n_z)
    inner = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N ** 2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k ** 2 - 1)
        v -= np.cos(N * theta[inner]) / (N ** 2 - 1)
    else:
        w[0] = w[N] = 1.0 / N ** 2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k ** 2 - 1)
    w[inner] = 2.0 * v / N

    z = (t - 1.0) / 2.0
    Dz = 2.0 * D
    for arr in (z, Dz, w):
        arr.setflags(write=False)
    return z, Dz, w / 2.0


# ---------------------------------------------------------------------------
# strip fields
# ---------------------------------------------------------------------------

STRIP_HEADER = struct.Struct("<qqdq")


def _xi_axes(grid):
    return tuple(range(1, grid.d + 1))


def _spectral_grad(vals, grid):
    """x-gradient of an (n_z, *shape) array, shape (d, n_z, *shape)."""
    axes = _xi_axes(grid)
    c = np.fft.fftn(vals, axes=axes)
    c[:, grid.nyquist] = 0.0
    return np.array([np.fft.ifftn(1j * grid.xi[ax] * c, axes=axes).real
                     for ax in range(grid.d)])


def _spectral_lap(vals, grid):
    axes = _xi_axes(grid)
    c = np.fft.fftn(vals, axes=axes)
    return np.fft.ifftn(-grid.xi_abs ** 2 * c, axes=axes).real


def _level_multiplier(vals, grid, mult):
    """Apply a per-level multiplier array of shape (n_z, *shape)."""
    axes = _xi_axes(grid)
    return np.fft.ifftn(np.fft.fftn(vals, axes=axes) * mult, axes=axes)


@dataclass(frozen=True, eq=False)
class StripField:
    """Values v(x, z) on grid x Chebyshev nodes, shape (n_z, *grid.shape)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape[1:] != self.grid.shape:
            raise GridMismatchError("strip values do not fit the grid")
        vals = vals.view()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_z(self):
        return self.values.shape[0]

    @property
    def z(self):
        return chebyshev(self.n_z)[0]

    @cached_property
    def dz(self):
        return np.tensordot(chebyshev(self.n_z)[1], self.values, axes=(1, 0))

    @cached_property
    def grad(self):
        return _spectral_grad(self.values, self.grid)

    def level(self, j: int = 0) -> Field:
        return Field(self.grid, self.values[j])

    def to_bytes(self) -> bytes:
        g = self.grid
        return (STRIP_HEADER.pack(g.d, g.n, g.period, self.n_z)
                + np.ascontiguousarray(self.z, dtype="<f8").tobytes()
                + np.ascontiguousarray(self.values.real, dtype="<f8").tobytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "StripField":
        d, n, period, n_z = STRIP_HEADER.unpack_from(data)
        grid = GridSpec(d=int(d), n=int(n), period=float(period))
        off = STRIP_HEADER.size + 8 * n_z
        vals = np.frombuffer(data, dtype="<f8", offset=off,
                             count=n_z * grid.size).reshape((n_z,) + grid.shape)
        return cls(grid, vals.astype(float))


# ---------------------------------------------------------------------------
# straightening
# ---------------------------------------------------------------------------

def default_delta(eta: Field, h: float, s: float = 2.5) -> float:
    """0.1 h / (1 + ||eta||_{H^{s+1/2}})."""
    return 0.1 * h / (1.0 + sobolev_norm(eta, s + 0.5, measure="normalized"))


@dataclass(frozen=True, eq=False)
class StraighteningMap:
    """rho(x, z) and its derivatives on (z-nodes, x-grid)."""

    grid: GridSpec
    h: float
    delta: float
    variant: str
    rho: np.ndarray
    rho_z: np.ndarray
    rho_zz: np.ndarray

    @property
    def n_z(self):
        return self.rho.shape[0]

    @property
    def z(self):
        return chebyshev(self.n_z)[0]

    @cached_property
    def grad_rho(self):
        return _spectral_grad(self.rho, self.grid)

    @cached_property
    def grad_rho_z(self):
        return _spectral_grad(self.rho_z, self.grid)

    @cached_property
    def lap_rho(self):
        return _spectral_lap(self.rho, self.grid)

    @property
    def min_rho_z(self) -> float:
        return float(self.rho_z.min())

    @cached_property
    def zeta1(self):
        return (1.0 + np.sum(self.grad_rho ** 2, axis=0)) / self.rho_z

    @property
    def zeta2(self):
        return self.grad_rho


def build_straightening(eta: Field, h: float = 1.0, delta: Optional[float] = None,
                        n_z: int = DEFAULT_NZ, variant: str = "flat") -> StraighteningMap:
    """Smoothed straightening y = rho(x, z) of the fluid strip.

    ``variant="flat"``: rho = (1+z) e^{delta z <D>} eta + z h, whose floor is
    the flat bottom y = -h.  ``variant="strip"``:
    rho = (1+z) e^{delta z <D>} eta - z (e^{-(1+z) delta <D>} eta - h), whose
    floor y = eta - h follows the surface.
    """
    if not h > 0:
        raise ParameterError("depth h must be positive")
    if delta is None:
        delta = default_delta(eta, h)
    if not delta > 0:
        raise ParameterError("delta must be positive")
    if variant not in ("flat", "strip"):
        raise ParameterError(f"unknown straightening variant {variant!r}")
    grid = eta.grid
    z = chebyshev(n_z)[0]
    zz = z.reshape((-1,) + (1,) * grid.d)
    dD = delta * japanese(grid.xi_abs)
    c = np.fft.fftn(eta.values)
    e1 = np.fft.ifftn(np.exp(zz * dD) * c, axes=_xi_axes(grid)).real
    e1d = np.fft.ifftn(dD * np.exp(zz * dD) * c, axes=_xi_axes(grid)).real
    e1dd = np.fft.ifftn(dD ** 2 * np.exp(zz * dD) * c, axes=_xi_axes(grid)).real
    rho = (1 + zz) * e1
    rho_z = e1 + (1 + zz) * e1d
    rho_zz = 2 * e1d + (1 + zz) * e1dd
    if variant == "flat":
        rho = rho + zz * h
        rho_z = rho_z + h
    else:
        decay = np.exp(-(1 + zz) * dD)
        e2 = np.fft.ifftn(decay * c, axes=_xi_axes(grid)).real
        e2d = np.fft.ifftn(dD * decay * c, axes=_xi_axes(grid)).real
        e2dd = np.fft.ifftn(dD ** 2 * decay * c, axes=_xi_axes(grid)).real
        rho = rho - zz * (e2 - h)
        rho_z = rho_z - e2 + zz * e2d + h
        rho_zz = rho_zz + 2 * e2d - zz * e2dd
    m = float(rho_z.min())
    if not m > 0:
        raise DiffeomorphismError(
            f"straightening is not a diffeomorphism: min d_z rho = {m:.3e}", m)
    return StraighteningMap(grid, float(h), float(delta), variant, rho, rho_z, rho_zz)


@dataclass(frozen=True, eq=False)
class EllipticCoeffs:
    """alpha, beta, gamma of the transformed Laplacian plus the map."""

    map: StraighteningMap
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray

    @property
    def grid(self):
        return self.map.grid


def elliptic_coeffs(smap: StraighteningMap) -> EllipticCoeffs:
    """alpha = rho_z^2/(1+|grad rho|^2), beta = -2 rho_z grad rho/(1+|grad rho|^2),
    gamma = (rho_zz + alpha Lap rho + beta . grad rho_z) / rho_z."""
    q = 1.0 + np.sum(smap.grad_rho ** 2, axis=0)
    alpha = smap.rho_z ** 2 / q
    beta = -2.0 * smap.rho_z * smap.grad_rho / q
    gamma = (smap.rho_zz + alpha * smap.lap_rho
             + np.sum(beta * smap.grad_rho_z, axis=0)) / smap.rho_z
    return EllipticCoeffs(smap, alpha, beta, gamma)


# ---------------------------------------------------------------------------
# strip solver
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _flat_preconditioner(grid: GridSpec, n_z: int, h: float):
    """Per-|xi|^2 inverses of the flat operator on the unknown nodes j >= 1."""
    _, Dz, _ = chebyshev(n_z)
    Dzz = Dz @ Dz
    rshape = grid.shape[:-1] + (grid.n // 2 + 1,)
    k = 2 * np.pi / grid.period * np.fft.rfftfreq(grid.n, d=1.0 / grid.n)
    if grid.d == 1:
        k2 = k ** 2
    else:
        k2 = (grid.wavenumbers[:, None] ** 2 + k[None, :] ** 2)
    uniq, inv = np.unique(np.round(k2, 10), return_inverse=True)
    mats = np.empty((uniq.size, n_z - 1, n_z - 1))
    for i, q in enumerate(uniq):
        A = Dzz[1:, 1:] - h ** 2 * q * np.eye(n_z - 1)
        A[-1] = Dz[-1, 1:] / h
        mats[i] = np.linalg.inv(A)
    return mats, inv.reshape(rshape)


class StripSolver:
    """Reusable solver context for one set of elliptic coefficients."""

    def __init__(self, coeffs: EllipticCoeffs, rtol: float = 1e-14,
                 maxiter: int = 400):
        self.coeffs = coeffs
        self.grid = coeffs.grid
        self.n_z = coeffs.alpha.shape[0]
        self.rtol = rtol
        self.maxiter = maxiter
        _, self.Dz, _ = chebyshev(self.n_z)
        self.Dzz = self.Dz @ self.Dz
        self._pre, self._pre_idx = _flat_preconditioner(self.grid, self.n_z,
                                                        coeffs.map.h)
        self.last_iterations = 0

    def operator(self, V):
        """Full-row operator on V of shape (n_z, *shape): PDE rows and bottom row."""
        c = self.coeffs
        grid = self.grid
        vz = np.tensordot(self.Dz, V, axes=(1, 0))
        vzz = np.tensordot(self.Dzz, V, axes=(1, 0))
        out = vzz + c.alpha * _spectral_lap(V, grid) - c.gamma * vz
        gvz = _spectral_grad(vz, grid)
        out += np.sum(c.beta * gvz, axis=0)
        gv = _spectral_grad(V[-1:], grid)
        m = c.map
        out[-1] = m.zeta1[-1] * vz[-1] - np.sum(m.zeta2[:, -1] * gv[:, 0], axis=0)
        return out

    def _apply_pre(self, r):
        grid = self.grid
        axes = _xi_axes(grid)
        R = np.fft.rfftn(r, axes=axes)
        flat = R.reshape(self.n_z - 1, -1)
        mats = self._pre[self._pre_idx.ravel()]
        out = np.einsum("mij,jm->im", mats, flat).reshape(R.shape)
        return np.fft.irfftn(out, s=grid.shape, axes=axes)

    def _solve_real(self, f, F0):
        grid = self.grid
        shape = (self.n_z - 1,) + grid.shape
        size = int(np.prod(shape))
        lifted = self._flat_lift(f)
        rhs = -self.operator(lifted)[1:]
        if F0 is not None:
            rhs[:-1] += F0[1:-1]
        if float(np.max(np.abs(rhs))) == 0.0:
            return lifted
        # tolerance is set by the uncorrected problem (data at z = 0 only), since
        # the flat lift can leave a right-hand side far below the roundoff level
        plain = np.zeros_like(lifted)
        plain[0] = f
        ref_rhs = -self.operator(plain)[1:]
        if F0 is not None:
            ref_rhs[:-1] += F0[1:-1]
        scale = max(float(np.max(np.abs(ref_rhs))), 1e-300)
        atol = self.rtol * float(np.linalg.norm(ref_rhs))

        def matvec(x):
            V = np.zeros((self.n_z,) + grid.shape)
            V[1:] = x.reshape(shape)
            return self.operator(V)[1:].ravel()

        A = LinearOperator((size, size), matvec=matvec, dtype=float)
        M = LinearOperator((size, size), matvec=lambda x: self._apply_pre(
            x.reshape(shape)).ravel(), dtype=float)
        x0 = self._apply_pre(rhs).ravel()
        count = [0]

        def cb(_):
            count[0] += 1
        sol, info = gmres(A, rhs.ravel(), x0=x0, M=M, rtol=0.0, atol=atol,
                          restart=60, maxiter=self.maxiter, callback=cb,
                          callback_type="pr_norm")
        self.last_iterations = count[0]
        resid = float(np.max(np.abs(matvec(sol) - rhs.ravel()))) / scale
        if info != 0 and resid > 1e-8:
            raise SingularSystemError(
                f"strip solve did not converge (info={info}, residual={resid:.2e})",
                info, resid)
        lifted[1:] += sol.reshape(shape)
        return lifted

    def _flat_lift(self, f):
        """Harmonic extension of f into the flat strip; the solve only corrects it."""
        grid = self.grid
        axes = _xi_axes(grid)
        h = self.coeffs.map.h
        z = chebyshev(self.n_z)[0]
        k = 2 * np.pi / grid.period * np.fft.rfftfreq(grid.n, d=1.0 / grid.n)
        if grid.d == 1:
            kk = np.abs(k)
        else:
            kk = np.sqrt(grid.wavenumbers[:, None] ** 2 + k[None, :] ** 2)
        kz = kk * h
        zz = z.reshape((-1,) + (1,) * grid.d)
        # cosh(k h (1 + z)) / cosh(k h) without overflow
        prof = (np.exp(kz * zz) + np.exp(-kz * (2.0 + zz))) / (1.0 + np.exp(-2.0 * kz))
        F = np.fft.rfftn(f, axes=tuple(range(grid.d)))
        lifted = np.fft.irfftn(prof * F, s=grid.shape, axes=axes)
        lifted[0] = f
        return lifted

    def solve(self, f: Field, F0: Optional[np.ndarray] = None) -> StripField:
        if f.grid != self.grid:
            raise GridMismatchError("surface data and coefficients use different grids")
        vals = np.asarray(f.values)
        if np.iscomplexobj(vals) or (F0 is not None and np.iscomplexobj(F0)):
            F0r = None if F0 is None else np.real(F0)
            F0i = None if F0 is None else np.imag(F0)
            re = self._solve_real(vals.real, F0r)
            im = self._solve_real(vals.imag, F0i)
            return StripField(self.grid, re + 1j * im)
        return StripField(self.grid, self._solve_real(vals, F0))


def solve_strip(coeffs: EllipticCoeffs, f: Field, F0: Optional[np.ndarray] = None) -> StripField:
    """Solve the transformed Laplace problem with Dirichlet data f at z = 0."""
    return StripSolver(coeffs).solve(f, F0)


def strip_residual(coeffs: EllipticCoeffs, v: StripField, F0=None) -> float:
    """Max PDE residual at interior nodes."""
    r = StripSolver(coeffs).operator(np.asarray(v.values))[1:-1]
    if F0 is not None:
        r = r - F0[1:-1]
    return float(np.max(np.abs(r)))


def _trace_flux(coeffs: EllipticCoeffs, v: StripField, f: Field):
    m = coeffs.map
    grad_f = _spectral_grad(np.asarray(f.values)[None].real, f.grid)[:, 0]
    if np.iscomplexobj(f.values):
        grad_f = grad_f + 1j * _spectral_grad(np.asarray(f.values)[None].imag, f.grid)[:, 0]
    return m.zeta1[0] * v.dz[0] - np.sum(m.zeta2[:, 0] * grad_f, axis=0)


class DirichletNeumann:
    """G(eta) for a fixed surface; reuses the straightening and solver context."""

    def __init__(self, eta: Field, h: float = 1.0, delta: Optional[float] = None,
                 n_z: int = DEFAULT_NZ, variant: str = "flat"):
        self.eta = eta
        self.map = build_straightening(eta, h, delta, n_z, variant)
        self.coeffs = elliptic_coeffs(self.map)
        self.solver = StripSolver(self.coeffs)

    def extension(self, f: Field) -> StripField:
        return self.solver.solve(f)

    def __call__(self, f: Field) -> Field:
        v = self.solver.solve(f)
        return Field(f.grid, _trace_flux(self.coeffs, v, f))


def dirichlet_neumann(eta: Field, f: Field, h: float = 1.0, delta: Optional[float] = None,
                      n_z: int = DEFAULT_NZ, variant: str = "flat") -> Field:
    """G(eta) f = [zeta1 d_z v - zeta2 . grad v] at z = 0."""
    if eta.grid != f.grid:
        raise GridMismatchError("eta and f live on different grids")
    return DirichletNeumann(eta, h, delta, n_z, variant)(f)


def dirichlet_energy(coeffs: EllipticCoeffs, v: StripField) -> float:
    """Integral of |grad_{x,y} phi|^2 over the fluid, computed in strip coordinates."""
    m = coeffs.map
    grid = coeffs.grid
    _, _, w = chebyshev(v.n_z)
    vals = np.asarray(v.values)
    vz = v.dz
    gv = v.grad
    phi_y = vz / m.rho_z
    phi_x = gv - m.grad_rho * phi_y
    dens = (np.sum(np.abs(phi_x) ** 2, axis=0) + np.abs(phi_y) ** 2) * m.rho_z
    del vals
    return float(np.tensordot(w, dens, axes=(0, 0)).sum() * grid.cell)


def variational_ratio(coeffs: EllipticCoeffs, v: StripField, f: Field) -> float:
    """Dirichlet energy over ||f||^2_{H^{1/2}}; stays bounded for the variational solution."""
    denom = sobolev_norm(f, 0.5) ** 2
    return dirichlet_energy(coeffs, v) / denom if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

def principal_symbol_lambda(eta: Field, regularity: float = 1.0) -> Symbol:
    """lambda = sqrt((1+|grad eta|^2)|xi|^2 - (grad eta . xi)^2).

    In one dimension this is |xi| for every eta and is returned as a multiplier.
    """
    grid = eta.grid
    if grid.d == 1:
        return Symbol.multiplier(grid, lambda xi: np.abs(xi[0]), 1.0, name="lambda")
    g = _spectral_grad(np.asarray(eta.values)[None], grid)[:, 0]
    g2 = np.sum(g ** 2, axis=0)

    def sampler(xi):
        xi2 = np.sum(xi ** 2, axis=0)
        dot = np.tensordot(g, xi, axes=(0, 0))
        return np.sqrt(np.maximum((1.0 + g2)[..., None] * xi2 - dot ** 2, 0.0))
    return Symbol.general(grid, sampler, 1.0, regularity, name="lambda")


def dn_remainder(eta: Field, f: Field, h: float = 1.0, delta: Optional[float] = None,
                 n_z: int = DEFAULT_NZ, variant: str = "flat",
                 G: Optional[DirichletNeumann] = None) -> Field:
    """R(eta) f = G(eta) f - T_lambda f."""
    G = G or DirichletNeumann(eta, h, delta, n_z, variant)
    return G(f) - paradiff_apply(principal_symbol_lambda(eta), f)


def lifting_symbol_A(coeffs: EllipticCoeffs, level: int = 0) -> Symbol:
    """A = (-i beta . xi + sqrt(4 alpha <xi>^2 - (beta . xi)^2)) / 2 at one z-level."""
    grid = coeffs.grid
    alpha = coeffs.alpha[level]
    beta = coeffs.beta[:, level]
    bdot = np.tensordot(beta, grid.xi.reshape(grid.d, -1), axes=(0, 0))
    rad = 4 * alpha[..., None] * japanese(grid.xi_abs.ravel()) ** 2 - bdot ** 2
    if float(rad.min()) < 0:
        raise SymbolEllipticityError(
            f"lifting symbol radicand negative (min {float(rad.min()):.3e})")

    def sampler(xi):
        bx = np.tensordot(beta, xi, axes=(0, 0))
        jx = japanese(np.sqrt(np.sum(xi ** 2, axis=0)))
        return 0.5 * (-1j * bx + np.sqrt(np.maximum(4 * alpha[..., None] * jx ** 2 - bx ** 2, 0.0)))
    return Symbol.general(grid, sampler, 1.0, 1.0, name="A")


def good_unknown_surface(v: StripField, coeffs: EllipticCoeffs) -> Field:
    """w = (d_z - T_A) v at the surface z = 0."""
    tv = paradiff_apply(lifting_symbol_A(coeffs, 0), v.level(0))
    return Field(v.grid, v.dz[0] - tv.values)


def good_unknown_w(v: StripField, coeffs: EllipticCoeffs) -> StripField:
    """w = (d_z - T_A) v on every z-level, with A frozen per level."""
    out = np.array([v.dz[j] - paradiff_apply(lifting_symbol_A(coeffs, j),
                                             v.level(j)).values
                    for j in range(v.n_z)])
    return StripField(v.grid, out)
