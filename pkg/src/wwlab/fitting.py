"""Least-squares power-law fits with their diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class PowerFit:
    """y ~ C x^slope fitted in log-log coordinates."""

    slope: float
    log_c: float
    residual_rms: float
    log_range: float
    x_min: float
    x_max: float
    points: int

    @property
    def constant(self) -> float:
        return float(np.exp(self.log_c))

    @property
    def relative_residual(self) -> float:
        """RMS log-residual as a fraction of the spread of log y."""
        if self.log_range == 0:
            return 0.0 if self.residual_rms == 0 else float("inf")
        return self.residual_rms / self.log_range

    def predict(self, x):
        return self.constant * np.asarray(x, dtype=float) ** self.slope

    def as_dict(self):
        out = asdict(self)
        out["constant"] = self.constant
        out["relative_residual"] = self.relative_residual
        return out


def power_fit(x, y) -> PowerFit:
    """Fit log y = log C + slope log x; non-positive y raise ValueError."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points")
    if np.any(y <= 0) or np.any(x <= 0):
        raise ValueError("power fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, log_c = np.polyfit(lx, ly, 1)
    resid = ly - (log_c + slope * lx)
    return PowerFit(float(slope), float(log_c), float(np.sqrt(np.mean(resid ** 2))),
                    float(ly.max() - ly.min()), float(x.min()), float(x.max()), int(x.size))


def offset_power_fit(eps, lhs, base):
    """Fit lhs <= C (c_o eps^kappa + base): returns (C, c_o, kappa).

    C is taken from the points where the base term dominates and the
    excess lhs/C - base is then fitted as a power of eps.
    """
    eps = np.asarray(eps, dtype=float)
    lhs = np.asarray(lhs, dtype=float)
    base = np.asarray(base, dtype=float)
    C = float(np.max(lhs / np.maximum(base, 1e-300)))
    excess = lhs / C - base
    pos = excess > 0
    if np.count_nonzero(pos) >= 2 and np.unique(eps[pos]).size >= 2:
        fit = power_fit(eps[pos], excess[pos])
        return C, fit.constant, fit.slope
    return C, 0.0, 1.0
