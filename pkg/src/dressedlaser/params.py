"""Physical configuration and the derived dressed-frame rates.

All rates are angular frequencies in the same (arbitrary) unit; the presets
use ``gamma = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional


class ConfigError(ValueError):
    """Invalid model configuration. ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class BandFlags:
    """Unit-step reservoir density at the central, upper and lower dressed lines."""

    u_central: bool = True
    u_plus: bool = True
    u_minus: bool = True


@dataclass(frozen=True)
class Truncation:
    """Fock-space cutoff: a fixed ``n_max`` or an adaptive search.

    The adaptive search doubles ``n_max`` from ``start`` until the steady-state
    population of the top Fock level drops below ``tail_eps``.
    """

    n_max: Optional[int] = None
    tail_eps: float = 1e-12
    start: int = 8
    cap: int = 4096

    @property
    def adaptive(self) -> bool:
        return self.n_max is None


@dataclass(frozen=True)
class Grid:
    """Uniform grid of offsets from the lower Rabi sideband."""

    nu_min: float
    nu_max: float
    points: int = 2001

    def values(self):
        import numpy as np

        return np.linspace(self.nu_min, self.nu_max, self.points)


@dataclass(frozen=True)
class ModelConfig:
    gamma: float = 1.0
    kappa: float = 0.05
    g: float = 5.0
    omega0: float = 20.0
    delta_a: float = 0.0
    phi_override: Optional[float] = None
    band_flags: BandFlags = field(default_factory=BandFlags)
    truncation: Truncation = field(default_factory=Truncation)
    grid: Optional[Grid] = None

    def __post_init__(self):
        validate_config(self)

    def resolved_grid(self) -> Grid:
        """The configured grid, or the default ``[-3g, 3g]`` with 2001 points."""
        if self.grid is not None:
            return self.grid
        return Grid(-3.0 * self.g, 3.0 * self.g, 2001)

    def scaled(self, c: float) -> "ModelConfig":
        """Same physics in a time unit ``1/c`` times as long."""
        grid = self.grid
        if grid is not None:
            grid = Grid(grid.nu_min * c, grid.nu_max * c, grid.points)
        return replace(
            self,
            gamma=self.gamma * c,
            kappa=self.kappa * c,
            g=self.g * c,
            omega0=self.omega0 * c,
            delta_a=self.delta_a * c,
            grid=grid,
        )


def _finite(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not math.isfinite(value):
        raise ConfigError(name, f"must be a finite number, got {value!r}")


def validate_config(cfg: ModelConfig) -> None:
    for name in ("gamma", "kappa", "g", "omega0", "delta_a"):
        _finite(name, getattr(cfg, name))
    if cfg.gamma <= 0:
        raise ConfigError("gamma", "must be > 0")
    if cfg.kappa < 0:
        raise ConfigError("kappa", "must be >= 0")
    if cfg.g <= 0:
        raise ConfigError("g", "must be > 0")
    if cfg.phi_override is None:
        if cfg.omega0 <= 0:
            raise ConfigError("omega0", "must be > 0 when phi_override is not given")
    else:
        _finite("phi_override", cfg.phi_override)
        if not 0.0 < cfg.phi_override < math.pi / 2:
            raise ConfigError("phi_override", "must lie in the open interval (0, pi/2)")
    t = cfg.truncation
    if t.n_max is not None and (not isinstance(t.n_max, int) or t.n_max < 1):
        raise ConfigError("truncation.n_max", "must be an integer >= 1")
    if not t.tail_eps > 0:
        raise ConfigError("truncation.tail_eps", "must be > 0")
    if t.start < 1 or t.cap < t.start:
        raise ConfigError("truncation.cap", "need 1 <= start <= cap")
    if cfg.grid is not None:
        _finite("grid.nu_min", cfg.grid.nu_min)
        _finite("grid.nu_max", cfg.grid.nu_max)
        if not cfg.grid.nu_min < cfg.grid.nu_max:
            raise ConfigError("grid", "nu_min must be < nu_max")
        if not isinstance(cfg.grid.points, int) or cfg.grid.points < 2:
            raise ConfigError("grid.points", "need at least 2 points")


@dataclass(frozen=True)
class DressedFrame:
    """Rates and couplings of the driven atom in its dressed basis.

    ``gamma_plus`` pumps |2~> -> |1~> (upper sideband), ``gamma_minus`` is
    spontaneous emission |1~> -> |2~> on the cavity-resonant lower sideband.
    """

    phi: float
    big_omega: float
    g1: float
    gamma0: float
    gamma_plus: float
    gamma_minus: float
    Gamma_c: float

    @classmethod
    def from_rates(cls, g1, gamma0, gamma_plus, gamma_minus, phi=math.nan, big_omega=math.nan):
        """Frame built directly from rates; used by tests and rate-space sweeps."""
        return cls(
            phi=phi,
            big_omega=big_omega,
            g1=g1,
            gamma0=gamma0,
            gamma_plus=gamma_plus,
            gamma_minus=gamma_minus,
            Gamma_c=0.5 * (gamma0 + gamma_plus + gamma_minus),
        )


def mixing_angle(omega0: float, delta_a: float) -> tuple[float, float]:
    """Return ``(phi, Omega)`` with ``cos^2 phi = (1 + delta_a/(2 Omega))/2``."""
    two_omega = math.hypot(2.0 * omega0, delta_a)
    cos2 = 0.5 * (1.0 + delta_a / two_omega)
    return math.acos(math.sqrt(cos2)), 0.5 * two_omega


def derive_dressed(cfg: ModelConfig) -> DressedFrame:
    validate_config(cfg)
    if cfg.phi_override is not None:
        phi = cfg.phi_override
        if cfg.omega0 > 0 or cfg.delta_a != 0:
            big_omega = 0.5 * math.hypot(2.0 * cfg.omega0, cfg.delta_a)
        else:
            big_omega = math.nan
    else:
        phi, big_omega = mixing_angle(cfg.omega0, cfg.delta_a)
    s2 = math.sin(phi) ** 2
    c2 = math.cos(phi) ** 2
    flags = cfg.band_flags
    gamma0 = cfg.gamma * 4.0 * s2 * c2 * float(flags.u_central)
    gamma_minus = cfg.gamma * s2 * s2 * float(flags.u_minus)
    gamma_plus = cfg.gamma * c2 * c2 * float(flags.u_plus)
    return DressedFrame(
        phi=phi,
        big_omega=big_omega,
        g1=cfg.g * s2,
        gamma0=gamma0,
        gamma_plus=gamma_plus,
        gamma_minus=gamma_minus,
        Gamma_c=0.5 * (gamma0 + gamma_plus + gamma_minus),
    )


def validate_regime(cfg: ModelConfig, frame: DressedFrame) -> list[str]:
    """Non-fatal warnings when the model's approximations are questionable."""
    warnings = []
    scale = max(cfg.g, cfg.gamma, cfg.kappa)
    two_omega = 2.0 * frame.big_omega
    if math.isfinite(two_omega) and two_omega < 10.0 * scale:
        warnings.append(
            f"rwa: Rabi splitting 2*Omega={two_omega:.4g} is below 10*max(g, gamma, kappa)={10 * scale:.4g}"
        )
    if cfg.g <= max(cfg.kappa, cfg.gamma):
        warnings.append(
            f"good-cavity: g={cfg.g:.4g} does not exceed max(kappa, gamma)={max(cfg.kappa, cfg.gamma):.4g}"
        )
    return warnings
