"""Test-field corpora and initial-data families used by the experiments."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..spectral import Field, GridSpec, japanese, read_field, sobolev_norm


def decay_field(grid: GridSpec, decay: float, rng: np.random.Generator,
                low_cut: float = 0.0) -> Field:
    """Real field with |u^(xi)| = <xi>^-decay exactly and random phases.

    Modes with |xi| < low_cut are zeroed.
    """
    phi = 2 * np.pi * rng.random(grid.shape)
    phi = phi - phi[grid.negate_index]      # odd phase keeps the field real
    c = japanese(grid.xi_abs) ** (-decay) * np.exp(1j * phi)
    c = np.where(grid.xi_abs < low_cut, 0.0, c)
    c[grid.nyquist] = 0.0
    return Field.from_coeffs(grid, c, real=True)


def bump(grid: GridSpec, width: float = 2.0) -> Field:
    """Smooth periodic bump exp(width (cos(x - c) - 1)) per axis, centred mid-period."""
    vals = np.ones(grid.shape)
    k = 2 * np.pi / grid.period
    for x in grid.x:
        vals = vals * np.exp(width * (np.cos(k * (x - grid.period / 2)) - 1.0))
    return Field(grid, vals)


def wave_packet(grid: GridSpec, N: int, width: float = 2.0) -> Field:
    """cos(N x_0) times a bump: frequency content concentrated near N."""
    k = 2 * np.pi / grid.period
    return Field(grid, np.cos(N * k * grid.x[0]) * bump(grid, width).values)


def normalized(u: Field, s: float) -> Field:
    nrm = sobolev_norm(u, s)
    return u if nrm == 0 else u * (1.0 / nrm)


def band_limited(grid: GridSpec, band: int, amplitude: float,
                 rng: np.random.Generator) -> Field:
    """Random real trigonometric polynomial in modes 1..band with max |u| = amplitude."""
    k = 2 * np.pi / grid.period
    vals = np.zeros(grid.shape)
    for x in grid.x:
        for j in range(1, band + 1):
            a, b = rng.normal(size=2) / j
            vals = vals + a * np.cos(j * k * x) + b * np.sin(j * k * x)
    peak = np.max(np.abs(vals))
    return Field(grid, vals * (amplitude / peak if peak > 0 else 0.0))


def weierstrass(grid: GridSpec, r: float, rng: np.random.Generator) -> Field:
    """sum_j 2^{-jr} cos(2^j x + phase_j) up to a quarter of the grid: Zygmund class r."""
    k = 2 * np.pi / grid.period
    vals = np.zeros(grid.shape)
    j = 0
    while 2 ** j < grid.n // 4:
        ph = 2 * np.pi * rng.random()
        for x in grid.x:
            vals = vals + 2.0 ** (-j * r) * np.cos(2 ** j * k * x + ph)
        j += 1
    return Field(grid, vals)


def linear_frequency(k: float, g: float, h: float) -> float:
    return math.sqrt(g * k * math.tanh(k * h))


def traveling_wave(grid: GridSpec, amplitude: float, mode: int, g: float, h: float):
    """Linear traveling wave: eta = A cos(kx), psi = (g A / omega) sin(kx)."""
    k = mode * 2 * np.pi / grid.period
    om = linear_frequency(k, g, h)
    x = grid.x[0]
    eta = Field(grid, amplitude * np.cos(k * x))
    psi = Field(grid, (g * amplitude / om) * np.sin(k * x))
    return eta, psi


def bump_mode(grid: GridSpec, N: int, s: float) -> Field:
    """cos(N x) / <N>^{s+1/2}: order-one size in H^{s+1/2}."""
    k = 2 * np.pi / grid.period
    return Field(grid, np.cos(N * k * grid.x[0]) / japanese(N * k) ** (s + 0.5))


def family_member(cfg, grid: GridSpec, n: int, kind: Optional[str] = None):
    """(eta_n, psi_n) of the configured initial-data family; n = 0 is the base state."""
    fam = cfg.family
    kind = kind or fam.kind
    g, h, s = cfg.physics.g, cfg.physics.h, cfg.analysis.s
    if kind == "files":
        eta = read_field(fam.eta_files.format(n=n))
        if fam.psi_files:
            psi = read_field(fam.psi_files.format(n=n))
        else:
            psi = eta.grid.zeros()
        return eta, psi
    eta, psi = traveling_wave(grid, fam.base_amplitude, fam.base_mode, g, h)
    if n == 0:
        return eta, psi
    if kind == "amplitude":
        return eta + bump_mode(grid, fam.perturb_mode, s) * 2.0 ** (-n), psi
    if kind == "frequency":
        return eta + bump_mode(grid, 2 ** n, s) * fam.delta0, psi
    raise ValueError(f"unknown family kind {kind!r}")
