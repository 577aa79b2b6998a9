"""
Periodic spectral substrate.

Grids, fields, Fourier multipliers, the dyadic Littlewood-Paley ladder,
Sobolev and Zygmund norms, and the Friedrichs mollifier pair (J_eps, K_eps).

Conventions
-----------
Frequencies are xi_j = 2*pi*j/L for j in [-n/2, n/2) on each axis, stored in
numpy FFT order.  Fourier coefficients are normalized so that
``u(x) = sum_xi c(xi) exp(i xi.x)``, i.e. ``c = fft(u) / n**d``.  Discrete
L^2 norms use the measure (L/n)^d, so that a constant field c has L^2 norm
|c| L^(d/2).
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Union

import numpy as np

from .errors import GridMismatchError, InvalidMultiplierError, ParameterError

# plateau constants of the Littlewood-Paley cutoff
KAPPA_INNER = 1.1
KAPPA_OUTER = 1.9
# plateau constants of the Friedrichs mollifier symbol
JMATH_INNER = 1.0
JMATH_OUTER = 2.0


# ---------------------------------------------------------------------------
# smooth profiles
# ---------------------------------------------------------------------------

def _exp_tail(t):
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    a = _exp_tail(t)
    b = _exp_tail(1.0 - t)
    return a / (a + b)


def plateau(r, inner, outer):
    """Radial bump equal to 1 for r <= inner and 0 for r >= outer."""
    r = np.asarray(r, dtype=float)
    return 1.0 - smooth_step((r - inner) / (outer - inner))


def kappa(theta):
    """Littlewood-Paley cutoff as a function of |theta|."""
    return plateau(np.abs(theta), KAPPA_INNER, KAPPA_OUTER)


def jmath(xi):
    """Friedrichs mollifier symbol as a function of |xi|."""
    return plateau(np.abs(xi), JMATH_INNER, JMATH_OUTER)


def japanese(xi_abs):
    """<xi> = sqrt(1 + |xi|^2)."""
    return np.sqrt(1.0 + np.asarray(xi_abs, dtype=float) ** 2)


# ---------------------------------------------------------------------------
# grid and fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid on [0, L)^d."""

    d: int = 1
    n: int = 64
    period: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ParameterError(f"dimension must be 1 or 2, got {self.d}")
        n = int(self.n)
        if n < 16 or n & (n - 1):
            raise ParameterError(f"n must be a power of two >= 16, got {self.n}")
        if not self.period > 0:
            raise ParameterError("period must be positive")

    @property
    def shape(self):
        return (self.n,) * self.d

    @property
    def size(self):
        return self.n ** self.d

    @property
    def dx(self):
        return self.period / self.n

    @property
    def cell(self):
        """Quadrature weight (L/n)^d."""
        return self.dx ** self.d

    @property
    def volume(self):
        return self.period ** self.d

    @cached_property
    def wavenumbers(self):
        """1-D lattice 2*pi*j/L in FFT order."""
        return 2 * np.pi * np.fft.fftfreq(self.n, d=self.period / self.n)

    @cached_property
    def xi(self):
        """Frequency lattice, shape (d, *shape)."""
        k = self.wavenumbers
        return np.array(np.meshgrid(*([k] * self.d), indexing="ij"))

    @cached_property
    def xi_abs(self):
        return np.sqrt(np.sum(self.xi ** 2, axis=0))

    @cached_property
    def x(self):
        """Physical coordinates, shape (d, *shape)."""
        x1 = np.arange(self.n) * self.dx
        return np.array(np.meshgrid(*([x1] * self.d), indexing="ij"))

    @property
    def xi_max(self):
        return float(self.xi_abs.max())

    @cached_property
    def nyquist(self):
        """Boolean mask of lattice points carrying a Nyquist index on some axis."""
        j = np.fft.fftfreq(self.n, d=1.0 / self.n)
        on_axis = j == -self.n // 2
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.d):
            idx = [None] * self.d
            idx[ax] = slice(None)
            mask |= on_axis[tuple(idx)]
        return mask

    @cached_property
    def negate_index(self):
        """Index arrays mapping xi -> -xi on the lattice."""
        j = (-np.arange(self.n)) % self.n
        return np.ix_(*([j] * self.d))

    def dealias_mask(self, fraction=2.0 / 3.0):
        """Mask keeping |j| < fraction * n/2 on every axis."""
        j = np.abs(np.fft.fftfreq(self.n, d=1.0 / self.n))
        keep = j < fraction * self.n / 2
        mask = np.ones(self.shape, dtype=bool)
        for ax in range(self.d):
            idx = [None] * self.d
            idx[ax] = slice(None)
            mask &= keep[tuple(idx)]
        return mask

    def zeros(self):
        return Field(self, np.zeros(self.shape))

    def field(self, fn: Callable) -> "Field":
        """Sample ``fn(*coords)`` on the grid."""
        return Field(self, np.asarray(fn(*self.x)) * np.ones(self.shape))

    def mode(self, *j) -> "Field":
        """exp(i xi_j . x) for integer lattice index j."""
        if len(j) != self.d:
            raise ParameterError("need one integer per axis")
        phase = sum(2 * np.pi * jj / self.period * xx for jj, xx in zip(j, self.x))
        return Field(self, np.exp(1j * phase))


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a (real or complex) periodic function on a grid."""

    grid: GridSpec
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(
                f"values of shape {vals.shape} do not fit grid {self.grid.shape}")
        if not np.iscomplexobj(vals):
            vals = vals.astype(float, copy=False)
        vals = vals.view()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_coeffs(cls, grid, coeffs, real=False):
        vals = np.fft.ifftn(np.asarray(coeffs) * grid.size)
        if real:
            vals = vals.real
        return cls(grid, vals)

    @cached_property
    def coeffs(self):
        c = np.fft.fftn(self.values) / self.grid.size
        c.setflags(write=False)
        return c

    @property
    def is_real(self):
        return not np.iscomplexobj(self.values)

    @property
    def real(self):
        return Field(self.grid, self.values.real)

    @property
    def imag(self):
        return Field(self.grid, np.imag(self.values))

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise GridMismatchError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.values / self._other(other))

    def __rtruediv__(self, other):
        return Field(self.grid, self._other(other) / self.values)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def inner(self, other):
        """L^2 inner product <self, other> = int self * conj(other)."""
        return np.sum(self.values * np.conj(self._other(other))) * self.grid.cell

    def max_abs(self):
        return float(np.max(np.abs(self.values)))


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")
    return g


# ---------------------------------------------------------------------------
# multipliers
# ---------------------------------------------------------------------------

Multiplier = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float, complex]


def multiplier_on_lattice(grid: GridSpec, m: Multiplier) -> np.ndarray:
    """Evaluate a multiplier (callable of the (d, ...) xi array, array or scalar)."""
    if callable(m):
        vals = np.asarray(m(grid.xi))
    else:
        vals = np.asarray(m)
    return np.broadcast_to(vals, grid.shape)


def is_conjugate_symmetric(grid: GridSpec, m: np.ndarray, rtol=1e-13) -> bool:
    m = np.broadcast_to(m, grid.shape)
    ok = ~grid.nyquist
    diff = np.abs(m[grid.negate_index] - np.conj(m))[ok]
    scale = max(np.max(np.abs(m[ok])), 1.0)
    return bool(np.all(diff <= rtol * scale))


def fourier_multiplier(u: Field, m: Multiplier) -> Field:
    """Apply m(D): multiply the Fourier coefficients of u pointwise by m(xi)."""
    grid = u.grid
    mvals = multiplier_on_lattice(grid, m)
    if not np.all(np.isfinite(mvals)):
        raise InvalidMultiplierError("multiplier is not finite on the lattice")
    out = Field.from_coeffs(grid, u.coeffs * mvals)
    if u.is_real and is_conjugate_symmetric(grid, mvals):
        out = out.real
    return out


def derivative(u: Field, axis: int = 0, order: int = 1) -> Field:
    """Spectral derivative along one axis."""
    return fourier_multiplier(u, (1j * u.grid.xi[axis]) ** order)


def gradient(u: Field) -> tuple:
    return tuple(derivative(u, ax) for ax in range(u.grid.d))


def divergence(vec) -> Field:
    out = derivative(vec[0], 0)
    for ax in range(1, len(vec)):
        out = out + derivative(vec[ax], ax)
    return out


def laplacian(u: Field) -> Field:
    return fourier_multiplier(u, -u.grid.xi_abs ** 2)


def bessel_potential(u: Field, s: float) -> Field:
    """<D>^s u."""
    return fourier_multiplier(u, japanese(u.grid.xi_abs) ** s)


# ---------------------------------------------------------------------------
# Littlewood-Paley ladder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DyadicLadder:
    """Blocks kappa_k, phi_k of the dyadic partition of unity on a grid."""

    grid: GridSpec

    @property
    def k_max(self):
        return int(np.ceil(np.log2(self.grid.xi_max / KAPPA_INNER))) + 1

    def kappa_k(self, k: int, theta_abs=None):
        """kappa(2^-k theta); defined for every integer k."""
        if theta_abs is None:
            theta_abs = self.grid.xi_abs
        return kappa(np.ldexp(np.asarray(theta_abs, dtype=float), -k))

    def phi_k(self, k: int, xi_abs=None):
        if k == 0:
            return self.kappa_k(0, xi_abs)
        return self.kappa_k(k, xi_abs) - self.kappa_k(k - 1, xi_abs)

    @cached_property
    def blocks(self):
        """phi_k on the lattice for k = 0..k_max."""
        return [self.phi_k(k) for k in range(self.k_max + 1)]

    def check_index(self, k):
        if not 0 <= k <= self.k_max:
            raise IndexError(f"block index {k} outside 0..{self.k_max}")


def dyadic_block(u: Field, k: int) -> Field:
    """Delta_k u."""
    ladder = DyadicLadder(u.grid)
    ladder.check_index(k)
    return fourier_multiplier(u, ladder.blocks[k])


def running_sum(u: Field, k: int) -> Field:
    """S_k u = kappa_k(D) u."""
    ladder = DyadicLadder(u.grid)
    ladder.check_index(k)
    return fourier_multiplier(u, ladder.kappa_k(k))


def block_energies(u: Field):
    """L^2 norms of Delta_k u for k = 0..k_max."""
    ladder = DyadicLadder(u.grid)
    c = u.coeffs
    return [float(np.sqrt(u.grid.volume * np.sum(np.abs(phi * c) ** 2)))
            for phi in ladder.blocks]


def write_block_energies_csv(u: Field, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "energy"])
        for k, e in enumerate(block_energies(u)):
            w.writerow([k, repr(e)])


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def _measure(grid, measure):
    if measure == "grid":
        return grid.volume
    if measure == "normalized":
        return 1.0
    raise ParameterError(f"unknown measure {measure!r}")


def sobolev_norm(u: Field, s: float, measure: str = "grid") -> float:
    """(sum <xi>^{2s} |c(xi)|^2 * L^d)^{1/2}.

    ``measure="normalized"`` divides out the domain volume so that a constant
    c has norm |c|.
    """
    w = japanese(u.grid.xi_abs) ** (2 * s)
    return float(np.sqrt(_measure(u.grid, measure) * np.sum(w * np.abs(u.coeffs) ** 2)))


def l2_norm(u: Field) -> float:
    return sobolev_norm(u, 0.0)


def sobolev_norm_vec(vec, s: float) -> float:
    return float(np.sqrt(sum(sobolev_norm(v, s) ** 2 for v in vec)))


def zygmund_norm(u: Field, s: float) -> float:
    """sup_q 2^{qs} ||Delta_q u||_{L^inf} over the blocks of the grid."""
    ladder = DyadicLadder(u.grid)
    c = u.coeffs
    best = 0.0
    for q, phi in enumerate(ladder.blocks):
        block = np.fft.ifftn(phi * c) * u.grid.size
        best = max(best, 2.0 ** (q * s) * float(np.max(np.abs(block))))
    return best


# ---------------------------------------------------------------------------
# Friedrichs mollifiers
# ---------------------------------------------------------------------------

def _check_eps(eps):
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"eps must lie in (0, 1), got {eps}")


def j_symbol(grid: GridSpec, eps: float):
    _check_eps(eps)
    return jmath(eps * grid.xi_abs)


def k_symbol(grid: GridSpec, eps: float, power: int = 1):
    """(1 - jmath(eps xi))^power on the lattice."""
    return (1.0 - j_symbol(grid, eps)) ** power


def mollify(u: Field, eps: float):
    """Return (J_eps u, K_eps u)."""
    j = j_symbol(u.grid, eps)
    ju = fourier_multiplier(u, j)
    ku = fourier_multiplier(u, 1.0 - j)
    return ju, ku


def k_eps(u: Field, eps: float, power: int = 1) -> Field:
    """K_eps^power u."""
    return fourier_multiplier(u, k_symbol(u.grid, eps, power))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

FIELD_HEADER = struct.Struct("<qqd")


def field_to_bytes(u: Field) -> bytes:
    """Header (d, n, L little-endian int64/int64/float64) + row-major float64."""
    if not u.is_real:
        raise ParameterError("binary layout stores real fields only")
    g = u.grid
    return FIELD_HEADER.pack(g.d, g.n, g.period) + np.ascontiguousarray(
        u.values, dtype="<f8").tobytes()


def field_from_bytes(data: bytes) -> Field:
    d, n, period = FIELD_HEADER.unpack_from(data)
    grid = GridSpec(d=int(d), n=int(n), period=float(period))
    vals = np.frombuffer(data, dtype="<f8", offset=FIELD_HEADER.size,
                         count=grid.size).reshape(grid.shape)
    return Field(grid, vals.astype(float))


def write_field(path, u: Field):
    with open(path, "wb") as fh:
        fh.write(field_to_bytes(u))


def read_field(path) -> Field:
    with open(path, "rb") as fh:
        return field_from_bytes(fh.read())


def write_field_csv(path, u: Field):
    g = u.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{ax}" for ax in range(g.d)] + ["value"])
        coords = g.x.reshape(g.d, -1).T
        for pt, val in zip(coords, u.values.ravel()):
            w.writerow([repr(float(c)) for c in pt] + [repr(float(val))])
