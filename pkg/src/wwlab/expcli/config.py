"""Experiment configuration: an INI file whose sections mirror ``ExperimentConfig``."""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, Optional, Tuple

from ..errors import ConfigError

SCENARIOS = ("flowmap", "mollifier", "dn", "simulate")


def _default_eps():
    return tuple(2.0 ** -k for k in range(3, 7))


@dataclass(frozen=True)
class GridConfig:
    d: int = 1
    n: int = 256
    period: float = 2 * math.pi


@dataclass(frozen=True)
class PhysicsConfig:
    g: float = 1.0
    h: float = 1.0
    delta: Optional[float] = None
    n_z: int = 48


@dataclass(frozen=True)
class AnalysisConfig:
    s: float = 2.5
    rho0: Optional[float] = None
    mu: float = 0.0
    eps: Tuple[float, ...] = field(default_factory=_default_eps)


@dataclass(frozen=True)
class FamilyConfig:
    kind: str = "amplitude"          # amplitude | frequency | files
    base_amplitude: float = 0.02
    base_mode: int = 1
    perturb_mode: int = 8
    delta0: float = 0.2
    members: int = 6
    control: bool = False            # also run the frequency-marching family
    eta_files: Optional[str] = None  # pattern with {n}; n = 0 is the base state
    psi_files: Optional[str] = None


@dataclass(frozen=True)
class IntegrationConfig:
    T: Optional[float] = None
    periods: float = 2.0
    c_cfl: float = 0.5
    stride: int = 8
    dealias: bool = True
    filter: Optional[str] = None


@dataclass(frozen=True)
class MollifierConfig:
    n: int = 16384
    t_values: Tuple[float, ...] = (0.5, 1.0)
    eps: Tuple[float, ...] = tuple(2.0 ** -k for k in range(3, 9))
    margin: float = 0.05
    rough_regularity: float = 0.75
    paradiff_suite: bool = True
    sweep: Tuple[int, ...] = (8, 16, 32, 64)


@dataclass(frozen=True)
class DNConfig:
    flat_n: int = 256
    flat_kmax: int = 85
    pairs: int = 20
    pair_n: int = 64
    pair_amplitude: float = 0.1
    eta_amplitude: float = 0.05
    sweep: Tuple[int, ...] = (8, 16, 32, 64)
    amplitudes: Tuple[float, ...] = (0.01, 0.02, 0.04, 0.08)
    band: int = 4
    remainder: bool = True


@dataclass(frozen=True)
class SimulateConfig:
    conservation: bool = True
    dispersion_modes: Tuple[int, ...] = ()
    dispersion_n: int = 64
    dispersion_amplitude: float = 1e-4
    reduction: bool = False
    reduction_n: int = 128
    reduction_band: int = 3
    reduction_amplitude: float = 0.05
    reduction_periods: float = 0.5
    recovery_states: int = 0
    recovery_n: int = 128


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "simulate"
    seed: int = 0
    out: str = "out"
    grid: GridConfig = field(default_factory=GridConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    family: FamilyConfig = field(default_factory=FamilyConfig)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    mollifier: MollifierConfig = field(default_factory=MollifierConfig)
    dn: DNConfig = field(default_factory=DNConfig)
    simulate: SimulateConfig = field(default_factory=SimulateConfig)
    thresholds: Dict[str, float] = field(default_factory=dict)

    @property
    def rho0(self) -> float:
        """0.4 min(1, s - 1 - d/2) unless set."""
        if self.analysis.rho0 is not None:
            return self.analysis.rho0
        return 0.4 * min(1.0, self.analysis.s - 1.0 - self.grid.d / 2.0)

    def to_dict(self):
        return asdict(self)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **kw)


_SECTIONS = {
    "grid": GridConfig,
    "physics": PhysicsConfig,
    "analysis": AnalysisConfig,
    "family": FamilyConfig,
    "integration": IntegrationConfig,
    "mollifier": MollifierConfig,
    "dn": DNConfig,
    "simulate": SimulateConfig,
}


def _parse_value(raw: str, default, name: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            if not raw:
                return ()
            items = [x.strip() for x in raw.split(",") if x.strip()]
            elem = default[0] if default else None
            ints = all(x.lstrip("+-").isdigit() for x in items)
            if (isinstance(elem, int) and not isinstance(elem, bool)) or (elem is None and ints):
                return tuple(int(x) for x in items)
            return tuple(_parse_number(x) for x in items)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return _parse_number(raw)
        if default is None:
            if raw.lower() in ("", "none", "auto"):
                return None
            try:
                return _parse_number(raw)
            except ValueError:
                return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def _parse_number(raw: str) -> float:
    """Floats, plus 2^-k and pi multiples as a convenience."""
    raw = raw.strip()
    if raw.startswith("2^"):
        return 2.0 ** float(raw[2:])
    if raw.endswith("pi"):
        head = raw[:-2].rstrip("*").strip()
        return (float(head) if head else 1.0) * math.pi
    return float(raw)


def _section(cls, items: Dict[str, str], name: str):
    defaults = cls()
    known = {f.name for f in fields(cls)}
    kw = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown key {key!r} in section [{name}]")
        kw[key] = _parse_value(raw, getattr(defaults, key), f"{name}.{key}")
    return replace(defaults, **kw)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from exc
    kw = {}
    for sec in cp.sections():
        items = dict(cp.items(sec))
        if sec == "experiment":
            for key, raw in items.items():
                if key == "scenario":
                    kw["scenario"] = raw.strip()
                elif key == "seed":
                    kw["seed"] = _parse_value(raw, 0, "experiment.seed")
                elif key == "out":
                    kw["out"] = raw.strip()
                else:
                    raise ConfigError(f"unknown key {key!r} in section [experiment]")
        elif sec == "thresholds":
            kw["thresholds"] = {k: _parse_value(v, 0.0, f"thresholds.{k}")
                                for k, v in items.items()}
        elif sec in _SECTIONS:
            kw[sec] = _section(_SECTIONS[sec], items, sec)
        else:
            raise ConfigError(f"unknown section [{sec}]")
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _check_eps(eps, name):
    if not eps:
        raise ConfigError(f"{name} is empty")
    if any(not 0.0 < e < 1.0 for e in eps):
        raise ConfigError(f"{name} must lie in (0, 1)")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"{name} must be strictly decreasing")


def validate(cfg: ExperimentConfig) -> None:
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {cfg.scenario!r}; expected one of {SCENARIOS}")
    d = cfg.grid.d
    n = cfg.grid.n
    if d not in (1, 2):
        raise ConfigError("grid.d must be 1 or 2")
    if n < 16 or n & (n - 1):
        raise ConfigError("grid.n must be a power of two >= 16")
    s = cfg.analysis.s
    if not s > 1 + d / 2:
        raise ConfigError(f"s = {s} must exceed 1 + d/2")
    if cfg.scenario in ("flowmap", "simulate") and not s > 1.5 + d / 2:
        raise ConfigError(f"s = {s} must exceed 3/2 + d/2 for this scenario")
    _check_eps(cfg.analysis.eps, "analysis.eps")
    _check_eps(cfg.mollifier.eps, "mollifier.eps")
    if cfg.physics.g <= 0 or cfg.physics.h <= 0:
        raise ConfigError("g and h must be positive")
    if cfg.family.kind not in ("amplitude", "frequency", "files"):
        raise ConfigError(f"unknown family kind {cfg.family.kind!r}")
    if cfg.family.kind == "files" and not cfg.family.eta_files:
        raise ConfigError("family kind 'files' needs eta_files")
    if cfg.family.members < 1:
        raise ConfigError("family.members must be positive")
    if cfg.integration.stride < 1:
        raise ConfigError("integration.stride must be positive")
    if not 0 < cfg.integration.c_cfl <= 1:
        raise ConfigError("integration.c_cfl must lie in (0, 1]")
