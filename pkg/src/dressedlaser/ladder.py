"""Dressed ladder of the atom-cavity system in the secular picture.

States ``|Psi_{N,+-n}>`` mix ``|2~, n>`` and ``|1~, n-1>`` with equal weight.
The coherent term ``g1 [R12 a - a^+ R21, rho]`` of the master equation is
``-i[H, rho]`` with ``H = i g1 (R12 a - a^+ R21)``, so in this phase convention
the doublet amplitudes are ``(1, +-i)/sqrt(2)``; the real amplitudes
``(1, +-1)/sqrt(2)`` belong to the basis where ``|1~>`` carries an extra
factor ``i``.  Cascades between neighbouring rungs produce lines at ``nu = +-(sqrt(n+1) +- sqrt(n)) g1``
about the lower Rabi sideband.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import BlockVector, NumericalError
from .params import DressedFrame


class NonNormalizableError(NumericalError):
    """Ladder populations do not decay, so no normalized distribution exists."""


@dataclass(frozen=True)
class LadderState:
    n: int
    sign: int
    # amplitudes on |2~, n> and |1~, n-1>
    coeffs: tuple
    energy_offset: float


def eigensystem(frame: DressedFrame, n: int) -> list[LadderState]:
    """States of rung ``n`` with energies relative to ``N omega_L``.

    ``n = 0`` is the singlet ``|2~, 0>`` at ``+Omega``; ``n >= 1`` gives the
    doublet ``(|2~,n> +- i|1~,n-1>)/sqrt(2)`` at ``-(2n-1) Omega +- g1 sqrt(n)``.
    """
    if n < 0:
        raise ValueError("ladder index must be >= 0")
    if n == 0:
        return [LadderState(0, 0, (1.0, 0.0), frame.big_omega)]
    c = 1.0 / math.sqrt(2.0)
    base = -(2 * n - 1) * frame.big_omega
    split = frame.g1 * math.sqrt(n)
    return [LadderState(n, s, (complex(c), s * 1j * c), base + s * split) for s in (+1, -1)]


def inner_offset(n: int, g1: float) -> float:
    return (math.sqrt(n + 1) - math.sqrt(n)) * g1


def outer_offset(n: int, g1: float) -> float:
    return (math.sqrt(n + 1) + math.sqrt(n)) * g1


@dataclass(frozen=True)
class LadderLine:
    nu: float
    kind: str  # "inner" or "outer"
    n: int
    spont_rate_plus: float
    spont_rate_minus: float
    cavity_rate: float


@dataclass(frozen=True)
class LadderPrediction:
    peaks: tuple
    populations: np.ndarray
    meta: dict = field(default_factory=dict)

    def offsets(self) -> np.ndarray:
        """All predicted line positions, sorted."""
        return np.array(sorted(p.nu for p in self.peaks))


def peak_table(frame: DressedFrame, kappa: float, n_count: int) -> LadderPrediction:
    """Inner and outer lines ``+-nu_n`` for ``n < n_count`` with their rates.

    Each line carries the spontaneous rates ``gamma_+-/4 (1 + delta_n0)`` and the
    cavity rate ``kappa/4 (sqrt(n+1) -+ sqrt(n))^2``.  For ``n = 0`` the inner and
    outer lines coincide at ``g1``; both are listed.
    """
    if n_count < 1:
        raise ValueError("n_count must be >= 1")
    lines = []
    for n in range(n_count):
        weight = 1.0 + (n == 0)
        up = 0.25 * frame.gamma_plus * weight
        down = 0.25 * frame.gamma_minus * weight
        for kind, offset, sq in (
            ("inner", inner_offset(n, frame.g1), (math.sqrt(n + 1) - math.sqrt(n)) ** 2),
            ("outer", outer_offset(n, frame.g1), (math.sqrt(n + 1) + math.sqrt(n)) ** 2),
        ):
            for sign in (+1, -1):
                lines.append(LadderLine(sign * offset, kind, n, up, down, 0.25 * kappa * sq))
    try:
        pops = ladder_populations(frame, kappa, n_count)
    except NonNormalizableError:
        pops = np.full(n_count, np.nan)
    meta = {
        "g1": frame.g1,
        "gamma_plus": frame.gamma_plus,
        "gamma_minus": frame.gamma_minus,
        "gamma0": frame.gamma0,
        "kappa": kappa,
    }
    return LadderPrediction(tuple(lines), pops, meta)


def _ratios(frame: DressedFrame, kappa: float, n_count: int) -> np.ndarray:
    m = np.arange(1, n_count)
    return frame.gamma_plus / (frame.gamma_minus + (2 * m - 1) * kappa)


def ladder_populations(frame: DressedFrame, kappa: float, n_count: int, tol: float = 1e-12) -> np.ndarray:
    """``Pi_0 .. Pi_{n_count-1}`` from the product formula.

    Normalized so that ``Pi_0 + 2 sum_{n>=1} Pi_n = 1`` (each rung holds the two
    degenerate populations ``Pi_{+n} = Pi_{-n}``).  The balance relation between
    neighbouring rungs is checked to ``tol``.
    """
    if n_count < 1:
        raise ValueError("n_count must be >= 1")
    if frame.gamma_plus == 0.0:
        out = np.zeros(n_count)
        out[0] = 1.0
        return out
    if frame.gamma_minus + kappa <= 0.0:
        raise NonNormalizableError("gamma_minus + kappa = 0: the photon ladder never closes")
    ratios = _ratios(frame, kappa, max(n_count, 2))
    if ratios[-1] >= 1.0 and n_count > 1:
        raise NonNormalizableError(
            f"population ratio {ratios[-1]:.3g} >= 1 at n={n_count - 1}; raise n_count or the losses"
        )
    # the product can exceed the float range before it turns over
    log_rel = np.concatenate([[0.0], np.cumsum(np.log(ratios[: n_count - 1]))])
    rel = np.exp(log_rel - log_rel.max())
    pops = rel / (rel[0] + 2.0 * rel[1:].sum())
    _check_recurrence(frame, kappa, pops, tol)
    return pops


def _check_recurrence(frame, kappa, pops, tol):
    gp, gm = frame.gamma_plus, frame.gamma_minus
    scale = max(pops.max(), 1e-300) * max(gp + gm + kappa, 1e-300)
    if pops.size > 1 and abs(gp * pops[0] - (gm + kappa) * pops[1]) > tol * scale:
        raise NumericalError("ground-rung balance violated")
    for n in range(1, pops.size - 1):
        res = gp * pops[n - 1] - (gp + gm + (2 * n - 1) * kappa) * pops[n] + (gm + (2 * n + 1) * kappa) * pops[n + 1]
        if abs(res) > tol * scale:
            raise NumericalError(f"rung balance violated at n={n}: residual {res:.3e}")


@dataclass(frozen=True)
class ProjectedPopulations:
    singlet: float
    plus: np.ndarray  # Pi_{+n}, n = 1..n_max
    minus: np.ndarray  # Pi_{-n}
    # Re <2~,n|rho|1~,n-1>; equals -Im <Psi_+n|rho|Psi_-n>, the coherence the secular picture drops
    cross: np.ndarray

    @property
    def total(self) -> float:
        return float(self.singlet + self.plus.sum() + self.minus.sum())


def ladder_populations_numeric(steady: BlockVector) -> ProjectedPopulations:
    """Project a sector-0 steady state onto the ladder states.

    ``Pi_{+-n} = (rho22_nn + rho11_{n-1,n-1})/2 +- Im r_n`` with
    ``r_n = <2~,n|rho|1~,n-1>``.  The sector-0 combinations hold only
    ``Re r_n = rho3_n / sqrt(n)``; the real generator keeps ``Im r_n = 0`` in
    the stationary state, so the two members of a doublet come out equal.
    The state ``|1~, n_max>`` has no partner below the cutoff and is left out,
    so the total falls short of 1 by its population.
    """
    if steady.m != 0:
        raise ValueError("projection requires a sector-0 state")
    z = steady.data
    if np.iscomplexobj(z) and np.abs(z.imag).max() > 1e-10 * max(1.0, np.abs(z).max()):
        raise NumericalError("stationary combinations are not real")
    z = z.real
    rho22 = 0.5 * (z[:, 0] + z[:, 1])
    rho11 = 0.5 * (z[:, 0] - z[:, 1])
    n = np.arange(1, z.shape[0])
    mean = 0.5 * (rho22[1:] + rho11[:-1])
    return ProjectedPopulations(float(rho22[0]), mean.copy(), mean.copy(), z[1:, 2] / np.sqrt(n))
