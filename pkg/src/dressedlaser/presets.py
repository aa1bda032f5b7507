"""Named parameter sets for the pump regimes.

No drive strength is attached to the regimes, so each preset
pins the mixing angle through ``cos^2 phi`` instead of deriving it from
``omega0`` and ``delta_a``.  ``cos^2 phi`` sets the pump ``gamma_+ = gamma cos^4 phi``
and, through ``g1 = g sin^2 phi``, the coupling as well.  ``omega0`` is kept
only for the ladder energies.
"""

from __future__ import annotations

import math

from .params import BandFlags, ModelConfig

BASE = {"gamma": 1.0, "kappa": 0.05, "g": 5.0, "omega0": 20.0, "delta_a": 0.0}

# cos^2 phi per regime: two-peak vacuum Rabi doublet, onset of the inner
# multiplet, developed multiplet, single narrow lasing line
PUMP_COS2 = {
    "low": 0.05,
    "moderate": 0.1,
    "strong": 0.3,
    "high": 0.9,
}

INTERPRETATION = (
    "mixing angle pinned by cos^2(phi); omega0 is a nominal value and "
    "only enters the ladder energies"
)


def _build():
    table = {}
    for level, c2 in PUMP_COS2.items():
        phi = math.acos(math.sqrt(c2))
        table[f"fig-{level}-pump"] = {**BASE, "phi": phi, "band_flags": {}}
        table[f"fig-{level}-pump-bandgap"] = {**BASE, "phi": phi, "band_flags": {"u_minus": False}}
    return table


PRESETS = _build()

# presets in increasing pump order, for sweeps and regime checks
PUMP_SEQUENCE = tuple(f"fig-{level}-pump" for level in PUMP_COS2)


def preset_names() -> list[str]:
    return sorted(PRESETS)


def preset_config(name: str, **overrides) -> ModelConfig:
    """ModelConfig for a named preset, with keyword overrides."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(preset_names())}")
    p = dict(PRESETS[name])
    flags = BandFlags(**p.pop("band_flags"))
    phi = p.pop("phi")
    kwargs = {**p, "phi_override": phi, "band_flags": flags}
    kwargs.update(overrides)
    return ModelConfig(**kwargs)
