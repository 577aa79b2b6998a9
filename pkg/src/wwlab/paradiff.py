"""
Paradifferential calculus on the periodic lattice.

A symbol a(x, xi) is stored as a sampler: given frequency points it returns
the symbol at every grid point.  T_a is built blockwise from the dyadic
ladder: within block k the symbol is smoothed in x by S_{k-3} and applied to
Delta_k u, and the psi cutoff removes |eta| <= 1/5.  Products are formed on a
doubly padded grid and truncated, so the blockwise quantizer agrees with the
literal lattice double sum (``paradiff_matrix``) up to rounding.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import GridMismatchError, ParameterError, UnsupportedOrderError
from .spectral import (
    DyadicLadder,
    Field,
    GridSpec,
    fourier_multiplier,
    japanese,
    k_symbol,
    plateau,
)

PSI_INNER = 1.0 / 5.0
PSI_OUTER = 1.0 / 4.0
# bound on fine-grid samples held at once by the general quantizer
_CHUNK_BUDGET = 2 ** 21


class RegularityWarning(UserWarning):
    """A seminorm came out non-finite for the declared regularity."""


# ---------------------------------------------------------------------------
# cutoffs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParaCutoffs:
    """The psi cutoff and the admissible function chi of the quantization."""

    grid: GridSpec

    @staticmethod
    def psi(eta_abs):
        return 1.0 - plateau(eta_abs, PSI_INNER, PSI_OUTER)

    @cached_property
    def psi_lattice(self):
        """psi on the lattice with Nyquist points removed."""
        return np.where(self.grid.nyquist, 0.0, self.psi(self.grid.xi_abs))

    @cached_property
    def ladder(self):
        return DyadicLadder(self.grid)

    def chi(self, theta_abs, eta_abs):
        """chi(theta, eta) = sum_k kappa_{k-3}(theta) phi_k(eta)."""
        theta_abs = np.asarray(theta_abs, dtype=float)
        eta_abs = np.asarray(eta_abs, dtype=float)
        out = np.zeros(np.broadcast(theta_abs, eta_abs).shape)
        for k in range(self.ladder.k_max + 1):
            out = out + self.ladder.kappa_k(k - 3, theta_abs) * self.ladder.phi_k(k, eta_abs)
        return out


@lru_cache(maxsize=32)
def cutoffs_for(grid: GridSpec) -> ParaCutoffs:
    return ParaCutoffs(grid)


# ---------------------------------------------------------------------------
# padded (alias-free) helpers
# ---------------------------------------------------------------------------

def _lattice_index(n):
    return np.fft.fftfreq(n, d=1.0 / n).astype(int)


def _resize(c, n_from, n_to, axes):
    """Move lattice coefficients between lattices of size n_from and n_to.

    Only indices |j| < min(n_from, n_to)/2 survive; Nyquist points are dropped.
    """
    n = min(n_from, n_to)
    j = _lattice_index(n)
    j = j[j != -n // 2]
    out = c
    for ax in axes:
        moved = np.take(out, j % n_from, axis=ax)
        shape = list(out.shape)
        shape[ax] = n_to
        new = np.zeros(shape, dtype=complex)
        idx = [slice(None)] * out.ndim
        idx[ax] = j % n_to
        new[tuple(idx)] = moved
        out = new
    return out


def _to_fine(c, grid, axes=None):
    """Lattice coefficients -> samples on the 2n grid (band-limited interpolation)."""
    d = grid.d
    axes = tuple(range(d)) if axes is None else axes
    m = 2 * grid.n
    big = _resize(c, grid.n, m, axes)
    return np.fft.ifftn(big, axes=axes) * m ** d


def _from_fine(vals, grid, axes=None):
    d = grid.d
    axes = tuple(range(d)) if axes is None else axes
    m = 2 * grid.n
    c_big = np.fft.fftn(vals, axes=axes) / m ** d
    return _resize(c_big, m, grid.n, axes)


def _finish(grid, coeffs, real):
    out = Field.from_coeffs(grid, coeffs)
    if real:
        return out.real
    return out


def _is_hermitian(grid, c, rtol=1e-11):
    neg = c[grid.negate_index]
    scale = max(float(np.max(np.abs(c))), 1e-300)
    ok = ~grid.nyquist
    return bool(np.max(np.abs(neg - np.conj(c))[ok], initial=0.0) <= rtol * scale)


def dealiased_product(a: Field, u: Field) -> Field:
    """a*u with products formed on the padded grid and truncated to the lattice."""
    grid = _same_grid(a, u)
    fa = _to_fine(a.coeffs, grid)
    fu = _to_fine(u.coeffs, grid)
    return _finish(grid, _from_fine(fa * fu, grid), a.is_real and u.is_real)


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError("operands live on different grids")
    return g


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

class Symbol:
    """A symbol a(x, xi) of order ``order`` and x-regularity ``regularity``.

    ``sampler(xi)`` takes frequency points of shape (d, m) and returns an
    array of shape (*grid.shape, m).  ``kind`` selects quantizer fast paths:
    ``"multiplier"`` (x-independent), ``"coefficient"`` (xi-independent),
    ``"separable"`` (finite sum of coefficient * multiplier) or ``"general"``.
    """

    def __init__(self, grid: GridSpec, sampler: Callable, order: float,
                 regularity: float, kind: str = "general", terms=None,
                 name: str = ""):
        self.grid = grid
        self._sampler = sampler
        self.order = float(order)
        self.regularity = float(regularity)
        self.kind = kind
        self.terms = terms
        self.name = name

    def __repr__(self):
        return (f"Symbol({self.name or self.kind}, order={self.order}, "
                f"regularity={self.regularity})")

    def sample(self, xi):
        xi = np.asarray(xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[None, :] if self.grid.d == 1 else xi[:, None]
        out = np.asarray(self._sampler(xi))
        return np.broadcast_to(out, self.grid.shape + (xi.shape[1],))

    def on_lattice(self):
        """Samples at every lattice frequency, shape (*shape, N) with xi in FFT order."""
        return self.sample(self.grid.xi.reshape(self.grid.d, -1))

    # constructors ---------------------------------------------------------
    @classmethod
    def multiplier(cls, grid, m: Callable, order: float, name=""):
        """x-independent symbol m(xi); ``m`` maps (d, k) arrays to (k,)."""
        def sampler(xi):
            return np.asarray(m(xi))[(None,) * grid.d + (slice(None),)] * np.ones(
                grid.shape + (1,))
        return cls(grid, sampler, order, np.inf, "multiplier",
                   terms=[(None, m)], name=name)

    @classmethod
    def coefficient(cls, c: Field, regularity: float = 1.0, name=""):
        """xi-independent symbol c(x)."""
        grid = c.grid
        vals = c.values

        def sampler(xi):
            return vals[..., None] * np.ones(xi.shape[1])
        return cls(grid, sampler, 0.0, regularity, "coefficient",
                   terms=[(c, None)], name=name)

    @classmethod
    def separable(cls, terms: Sequence, order: float, regularity: float, name=""):
        """sum_j c_j(x) m_j(xi); ``terms`` holds (Field, callable) pairs."""
        grid = terms[0][0].grid

        def sampler(xi):
            out = 0
            for c, m in terms:
                out = out + c.values[..., None] * np.asarray(m(xi))[
                    (None,) * grid.d + (slice(None),)]
            return out
        return cls(grid, sampler, order, regularity, "separable",
                   terms=list(terms), name=name)

    @classmethod
    def general(cls, grid, fn: Callable, order: float, regularity: float, name=""):
        return cls(grid, fn, order, regularity, "general", name=name)


def _mult_on_lattice(grid, m, psi):
    """m(xi) where psi(xi) > 0, zero elsewhere (symbols may be singular at 0)."""
    out = np.zeros(grid.shape, dtype=complex)
    sel = psi > 0
    xi = grid.xi[:, sel]
    out[sel] = np.asarray(m(xi))
    if np.all(np.abs(out.imag) == 0):
        out = out.real
    return out


# ---------------------------------------------------------------------------
# quantization
# ---------------------------------------------------------------------------

def paraproduct(a: Field, u: Field) -> Field:
    """T_a u = sum_k S_{k-3}(a) Delta_k psi(D) u for a coefficient a(x)."""
    grid = _same_grid(a, u)
    cut = cutoffs_for(grid)
    ladder = cut.ladder
    ca = a.coeffs
    cu = u.coeffs * cut.psi_lattice
    acc = 0
    for k in range(ladder.k_max + 1):
        block = ladder.blocks[k] * cu
        if not np.any(block):
            continue
        low = ladder.kappa_k(k - 3) * ca
        acc = acc + _to_fine(low, grid) * _to_fine(block, grid)
    if isinstance(acc, int):
        return Field(grid, np.zeros(grid.shape, dtype=u.values.dtype))
    return _finish(grid, _from_fine(acc, grid), a.is_real and u.is_real)


def _apply_general(a: Symbol, u: Field) -> Field:
    grid = a.grid
    d = grid.d
    cut = cutoffs_for(grid)
    ladder = cut.ladder
    cu = u.coeffs * cut.psi_lattice
    m_fine = 2 * grid.n
    x_fine = np.array(np.meshgrid(*([np.arange(m_fine) * grid.period / m_fine] * d),
                                  indexing="ij"))
    x_axes = tuple(range(d))
    out_fine = np.zeros((m_fine,) * d, dtype=complex)
    for k in range(ladder.k_max + 1):
        w = (ladder.blocks[k] * cu)
        sel = np.flatnonzero(w)
        if sel.size == 0:
            continue
        smooth = ladder.kappa_k(k - 3)[..., None]
        xi_all = grid.xi.reshape(d, -1)
        w_flat = w.ravel()
        chunk = max(1, _CHUNK_BUDGET // m_fine ** d)
        for start in range(0, sel.size, chunk):
            idx = sel[start:start + chunk]
            xi = xi_all[:, idx]
            samples = a.sample(xi)
            coef = np.fft.fftn(samples, axes=x_axes) / grid.size * smooth
            sym_fine = _to_fine(coef, grid, axes=x_axes)
            phase = np.exp(1j * np.tensordot(xi, x_fine, axes=(0, 0)))
            phase = np.moveaxis(phase, 0, -1)
            out_fine += (sym_fine * phase) @ w_flat[idx]
    coeffs = _from_fine(out_fine, grid)
    return _finish(grid, coeffs, u.is_real and _is_hermitian(grid, coeffs))


def paradiff_apply(a: Symbol, u: Field, method: str = "auto") -> Field:
    """T_a u for an (x, xi) symbol.

    ``method="auto"`` uses the multiplier/paraproduct reductions when the
    symbol declares them; ``"blockwise"`` forces the general block loop;
    ``"dense"`` applies the lattice double-sum matrix.
    """
    if a.grid != u.grid:
        raise GridMismatchError("symbol and field live on different grids")
    grid = u.grid
    if method == "dense":
        c = paradiff_matrix(a) @ u.coeffs.ravel()
        c = c.reshape(grid.shape)
        return _finish(grid, c, u.is_real and _is_hermitian(grid, c))
    if method == "blockwise" or a.kind == "general":
        return _apply_general(a, u)
    psi = cutoffs_for(grid).psi_lattice
    if a.kind == "multiplier":
        m = _mult_on_lattice(grid, a.terms[0][1], psi)
        return fourier_multiplier(u, psi * m)
    if a.kind == "coefficient":
        return paraproduct(a.terms[0][0], u)
    if a.kind == "separable":
        out = None
        for c, m in a.terms:
            v = fourier_multiplier(u, _mult_on_lattice(grid, m, psi))
            term = paraproduct(c, v)
            out = term if out is None else out + term
        return out
    raise ParameterError(f"unknown symbol kind {a.kind!r}")


def paradiff_matrix(a: Symbol) -> np.ndarray:
    """Literal lattice double sum: the matrix M with (T_a u)^ = M u^.

    M[xi, eta] = chi(xi - eta, eta) psi(eta) a^(xi - eta, eta), where a^ is the
    discrete Fourier transform of a(., eta) in x; the difference xi - eta and
    the output xi range over the lattice without Nyquist points.  Indices are
    flattened FFT order.  Cost is O(N^2) memory; meant as an oracle.
    """
    grid = a.grid
    d = grid.d
    n = grid.n
    cut = cutoffs_for(grid)
    samples = a.on_lattice()
    ahat = np.fft.fftn(samples, axes=tuple(range(d))) / grid.size
    N = grid.size
    ahat = ahat.reshape(N, N)  # [theta (flattened fft order), eta]
    j = _lattice_index(n)
    jj = np.array(np.meshgrid(*([j] * d), indexing="ij")).reshape(d, -1)
    diff = jj[:, :, None] - jj[:, None, :]  # (d, xi, eta)
    valid = np.all(np.abs(diff) < n // 2, axis=0)
    valid &= np.all(jj != -n // 2, axis=0)[:, None]
    valid &= np.all(jj != -n // 2, axis=0)[None, :]
    theta_flat = np.zeros(diff.shape[1:], dtype=int)
    for ax in range(d):
        theta_flat = theta_flat * n + (diff[ax] % n)
    theta_abs = np.sqrt(np.sum((2 * np.pi / grid.period * diff) ** 2, axis=0))
    eta_abs = grid.xi_abs.ravel()[None, :]
    chi = cut.chi(theta_abs, eta_abs)
    psi = cut.psi(grid.xi_abs.ravel())[None, :]
    cols = np.broadcast_to(np.arange(N)[None, :], (N, N))
    M = chi * psi * ahat[theta_flat, cols]
    return np.where(valid, M, 0.0)


def paraproduct_bruteforce(a: Field, u: Field) -> Field:
    """T_a u via ``paradiff_matrix`` of the coefficient symbol."""
    return paradiff_apply(Symbol.coefficient(a), u, method="dense")


def bony_remainder(a: Field, u: Field) -> Field:
    """R(a, u) = a u - T_a u - T_u a (alias-free product)."""
    return dealiased_product(a, u) - paraproduct(a, u) - paraproduct(u, a)


# ---------------------------------------------------------------------------
# symbolic calculus
# ---------------------------------------------------------------------------

def _x_derivative_samples(samples, grid, axis):
    xi = grid.xi[axis][..., None]
    c = np.fft.fftn(samples, axes=tuple(range(grid.d)))
    c[grid.nyquist] = 0.0
    return np.fft.ifftn(1j * xi * c, axes=tuple(range(grid.d)))


def compose_symbols(a: Symbol, b: Symbol, rho: float) -> Symbol:
    """a # b = sum_{|alpha| < rho} (-i)^alpha / alpha! d_xi^alpha a d_x^alpha b.

    Only |alpha| <= 1 is implemented (rho <= 2).  xi-derivatives use centered
    differences with the lattice spacing; x-derivatives are spectral.
    """
    if a.grid != b.grid:
        raise GridMismatchError("symbols live on different grids")
    if rho > 2:
        raise UnsupportedOrderError("composition beyond |alpha| <= 1 is not implemented")
    grid = a.grid
    order = a.order + b.order
    if rho <= 1:
        def prod(xi):
            return a.sample(xi) * b.sample(xi)
        return Symbol.general(grid, prod, order, min(a.regularity, b.regularity),
                              name=f"{a.name}*{b.name}")
    h = 2 * np.pi / grid.period

    def sharp(xi):
        out = a.sample(xi) * b.sample(xi)
        for ax in range(grid.d):
            shift = np.zeros_like(xi)
            shift[ax] = h
            da = (a.sample(xi + shift) - a.sample(xi - shift)) / (2 * h)
            bs = b.sample(xi)
            db = _x_derivative_samples(bs, grid, ax)
            if np.isrealobj(bs):
                db = db.real
            out = out - 1j * da * db
        return out
    reg = max(min(a.regularity, b.regularity) - 1.0, 0.0)
    return Symbol.general(grid, sharp, order, reg, name=f"{a.name}#{b.name}")


# ---------------------------------------------------------------------------
# seminorms
# ---------------------------------------------------------------------------

def alpha_range(d: int, rho: float, cap: Optional[int] = 6):
    """Largest |alpha| used by the seminorm and whether it was truncated."""
    full = 2 * (d + 2) + int(np.ceil(rho))
    if cap is None or full <= cap:
        return full, False
    return cap, True


def _multi_indices(d, order):
    if d == 1:
        return [(order,)]
    return [(i, order - i) for i in range(order + 1)]


def _holder_seminorm(g, grid, sigma):
    """sup |g(x) - g(y)| / |x - y|^sigma over pairs along grid axes.

    ``g`` has shape (*grid.shape, m); the result has shape (m,).
    """
    n = grid.n
    best = np.zeros(g.shape[-1])
    for ax in range(grid.d):
        for r in range(1, n // 2 + 1):
            dist = r * grid.dx
            q = np.abs(g - np.roll(g, r, axis=ax)) / dist ** sigma
            best = np.maximum(best, q.reshape(-1, g.shape[-1]).max(axis=0))
    return best


def _w_norm(g, grid, rho):
    """W^{rho, inf} norm of each column of g (x-samples, m)."""
    k = int(np.floor(rho))
    sigma = rho - k
    best = np.max(np.abs(g.reshape(-1, g.shape[-1])), axis=0)
    top = [g]
    current = [g]
    for _ in range(k):
        nxt = []
        for h in current:
            for ax in range(grid.d):
                nxt.append(_x_derivative_samples(h, grid, ax))
        current = nxt
        for h in current:
            best = np.maximum(best, np.max(np.abs(h.reshape(-1, h.shape[-1])), axis=0))
        top = current
    if sigma > 0:
        hol = np.zeros(g.shape[-1])
        for h in top:
            hol = np.maximum(hol, _holder_seminorm(h, grid, sigma))
        best = best + hol
    return best


def estimate_seminorm(a: Symbol, m: float, rho: float, alpha_cap: Optional[int] = 6) -> float:
    """Discrete M^m_rho(a).

    sup over |alpha| <= alpha_range and lattice |xi| >= 1/2 of
    <xi>^{|alpha| - m} ||d_xi^alpha a(., xi)||_{W^{rho, inf}}.  The xi-derivatives
    are undivided forward differences over the lattice divided by the spacing,
    kept only where the whole stencil lies in |xi| >= 1/2.  A non-finite
    result is reported with a ``RegularityWarning`` and returned as inf.
    """
    grid = a.grid
    d = grid.d
    top, _ = alpha_range(d, rho, alpha_cap)
    h = 2 * np.pi / grid.period
    xi_nat = np.fft.fftshift(grid.xi, axes=tuple(range(1, d + 1)))
    samples = a.sample(xi_nat.reshape(d, -1)).reshape(grid.shape + grid.shape)
    valid0 = np.sqrt(np.sum(xi_nat ** 2, axis=0)) >= 0.5
    best = 0.0
    x_axes = d
    for order in range(top + 1):
        for alpha in _multi_indices(d, order):
            vals = samples
            valid = valid0
            centre = xi_nat.astype(float)
            for ax, count in enumerate(alpha):
                for _ in range(count):
                    vals = np.diff(vals, axis=x_axes + ax) / h
                    sl_lo = [slice(None)] * d
                    sl_hi = [slice(None)] * d
                    sl_lo[ax] = slice(None, -1)
                    sl_hi[ax] = slice(1, None)
                    valid = valid[tuple(sl_lo)] & valid[tuple(sl_hi)]
                    centre = 0.5 * (centre[(slice(None),) + tuple(sl_lo)]
                                    + centre[(slice(None),) + tuple(sl_hi)])
            if not np.any(valid):
                continue
            cols = vals.reshape(grid.shape + (-1,))[..., valid.ravel()]
            weight = japanese(np.sqrt(np.sum(centre ** 2, axis=0)))[valid] ** (order - m)
            if not np.all(np.isfinite(cols)):
                warnings.warn(f"non-finite symbol derivative of order {alpha}",
                              RegularityWarning)
                return float("inf")
            norms = _w_norm(cols, grid, rho)
            if not np.all(np.isfinite(norms)):
                warnings.warn("non-finite Hoelder quotient", RegularityWarning)
                return float("inf")
            best = max(best, float(np.max(weight * norms)))
    return best


# ---------------------------------------------------------------------------
# mollifier commutators
# ---------------------------------------------------------------------------

def _as_symbol(a):
    if isinstance(a, Symbol):
        return a
    if isinstance(a, Field):
        return Symbol.coefficient(a)
    raise ParameterError("expected a Symbol or a Field")


def commutator_with_multiplier(mult: np.ndarray, a, u: Field) -> Field:
    """[m(D), T_a] u = m(D) T_a u - T_a m(D) u."""
    a = _as_symbol(a)
    return (fourier_multiplier(paradiff_apply(a, u), mult)
            - paradiff_apply(a, fourier_multiplier(u, mult)))


def commutator_mollifier(a, u: Field, eps: float, square: bool = False,
                         s: float = 0.0) -> Field:
    """[K_eps, T_a] u, or [K_eps^2 <D>^s, T_a] u when ``square`` is set."""
    grid = u.grid
    if square:
        mult = k_symbol(grid, eps, 2) * japanese(grid.xi_abs) ** s
    else:
        mult = k_symbol(grid, eps, 1)
        if s:
            mult = mult * japanese(grid.xi_abs) ** s
    return commutator_with_multiplier(mult, a, u)
