"""Photon statistics and emission spectra from recurrence-engine solutions.

Spectra use offsets ``nu = omega - omega_minus`` from the lower Rabi sideband.
Two-time correlations follow the quantum regression theorem: the steady state
is multiplied from the left by ``a`` (cavity) or ``R21`` (lower-sideband
fluorescence), projected onto the sector-1 combinations, and propagated by the
sector-1 resolvent.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import (
    BlockTridiagonalGenerator,
    BlockVector,
    NumericalError,
    resolvent_solve_many,
)
from .params import DressedFrame

KINDS = ("cavity", "fluor_lower", "fluor_central", "fluor_upper")

# peaks are detected above DETECTION_FRACTION of the maximum and called
# dominant above DOMINANT_FRACTION
DETECTION_FRACTION = 0.01
DOMINANT_FRACTION = 0.1


class SymmetryError(NumericalError):
    """Steady state breaks the phase symmetry of the master equation."""


@dataclass
class Spectrum:
    nu: np.ndarray
    values: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nu = np.asarray(self.nu, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"unknown spectrum kind {self.kind!r}")
        if self.nu.shape != self.values.shape:
            raise ValueError("grid and values differ in length")
        if self.nu.size > 1 and not np.all(np.diff(self.nu) > 0):
            raise ValueError("frequency grid must be strictly increasing")

    @property
    def spacing(self) -> float:
        return float(np.min(np.diff(self.nu)))

    def integral(self) -> float:
        return float(np.trapezoid(self.values, self.nu))


@dataclass(frozen=True)
class PhotonStatistics:
    p_n: np.ndarray
    mean_n: float
    mandel_q: float
    mean_a: float


def photon_statistics(steady: BlockVector, tol: float = 1e-12) -> PhotonStatistics:
    """Photon-number distribution ``p_n = rho1_nn`` and its moments.

    ``mean_a`` is zero by construction: ``<n|a|n+1>`` terms live in sector 1,
    which the stationary state never populates.  Mandel Q is reported as 0
    for an empty cavity.
    """
    p = np.where(steady.data[:, 0].real < -tol, np.nan, steady.data[:, 0].real)
    if np.any(np.isnan(p)):
        raise NumericalError("steady state has negative photon-number populations")
    p = np.clip(p, 0.0, None)
    p = p / p.sum()
    n = np.arange(p.size)
    mean_n = float(n @ p)
    var = float((n**2) @ p - mean_n**2)
    q = (var - mean_n) / mean_n if mean_n > 1e-15 else 0.0
    return PhotonStatistics(p, mean_n, q, 0.0)


def excited_population(steady: BlockVector) -> float:
    """``<R12 R21>`` = total population of |1~>."""
    return float(0.5 * np.sum(steady.data[:, 0] - steady.data[:, 1]).real)


def regression_seed_cavity(steady: BlockVector) -> BlockVector:
    """Sector-1 combinations of ``a rho_s``.

    With ``r_k = <2,k|rho_s|1,k-1>`` (real in the stationary state) the
    sector-0 combinations give ``rho3_k = sqrt(k) r_k`` and
    ``rho4_k = sqrt(k+1) r_{k+1}``; the seed is

        sigma1_n = sqrt(n+1) rho1_{n+1}        sigma2_n = sqrt(n+1) rho2_{n+1}
        sigma3_n = (2n+1) rho4_n / (2 sqrt(n+1))   sigma4_n = sqrt(n+1) rho4_{n+1}
    """
    if steady.m != 0:
        raise ValueError("seed requires a sector-0 steady state")
    N = steady.n_max
    z = steady.data
    out = np.zeros((N, 4), dtype=z.dtype)
    n = np.arange(N)
    root = np.sqrt(n + 1.0)
    out[:, 0] = root * z[1:, 0]
    out[:, 1] = root * z[1:, 1]
    out[:, 2] = (2 * n + 1) / (2 * root) * z[:-1, 3]
    # rho4 of the top Fock level involves |N+1> and is absent
    out[:-1, 3] = root[:-1] * z[1:-1, 3]
    return BlockVector(1, N, out)


def regression_seed_fluor(steady: BlockVector) -> BlockVector:
    """Sector-1 combinations of ``R21 rho_s``.

    Left multiplication by ``R21`` leaves ``sigma22 = rho12`` and
    ``sigma21 = rho11`` with ``sigma11 = sigma12 = 0``, so

        sigma1_n = sigma2_n = <n|rho12|n+1> = r_{n+1}
        sigma3_n = sqrt(n+1) <n|rho11|n> / 2
        sigma4_n = sqrt(n+1) <n+1|rho11|n+1> / 2
    """
    if steady.m != 0:
        raise ValueError("seed requires a sector-0 steady state")
    N = steady.n_max
    z = steady.data
    out = np.zeros((N, 4), dtype=z.dtype)
    n = np.arange(N)
    root = np.sqrt(n + 1.0)
    rho11 = 0.5 * (z[:, 0] - z[:, 1])
    r_next = z[:-1, 3] / root  # r_{n+1} = rho4_n / sqrt(n+1)
    out[:, 0] = r_next
    out[:, 1] = r_next
    out[:, 2] = 0.5 * root * rho11[:-1]
    out[:, 3] = 0.5 * root * rho11[1:]
    return BlockVector(1, N, out)


def _check_symmetry(steady: BlockVector) -> None:
    # sector-0 data carries no <a>; a complex stationary vector would signal a broken phase symmetry
    if np.iscomplexobj(steady.data) and np.abs(steady.data.imag).max() > 1e-10 * max(1.0, np.abs(steady.data).max()):
        raise SymmetryError("stationary combinations are not real")


def cavity_transform(steady: BlockVector, gen_m1: BlockTridiagonalGenerator, shifts, method="thomas") -> np.ndarray:
    """``sum_n sqrt(n+1) X1_n(s)`` with ``X = (s - L1)^{-1} seed_cavity``."""
    seed = regression_seed_cavity(steady)
    X = resolvent_solve_many(gen_m1, shifts, seed, method=method)
    root = np.sqrt(np.arange(1, gen_m1.n_blocks + 1, dtype=float))
    return X[:, :, 0] @ root


def cavity_spectrum(steady: BlockVector, gen_m1: BlockTridiagonalGenerator, nu, shift_sign: int = -1, method="thomas") -> Spectrum:
    """Incoherent cavity output spectrum ``2 Re sum_n sqrt(n+1) X1_n(-i nu)``."""
    _check_symmetry(steady)
    nu = np.asarray(nu, dtype=float)
    t = cavity_transform(steady, gen_m1, shift_sign * 1j * nu, method=method)
    values = 2.0 * t.real
    return Spectrum(nu, values, "cavity", {"path": "recurrence", "n_max": gen_m1.n_max, "kappa": gen_m1.kappa})


def fluor_lower_spectrum(
    steady: BlockVector, gen_m1: BlockTridiagonalGenerator, frame: DressedFrame, nu, method="thomas"
) -> Spectrum:
    """Lower-sideband fluorescence.

    ``gamma_- Re{ [<R12 R21> + g1 sum_n sqrt(n+1) X2_n(i nu)] / (Gamma_c + i nu) }``,
    the Laplace transform of ``Tr rho21(tau)`` obtained from its equation of motion.
    """
    _check_symmetry(steady)
    nu = np.asarray(nu, dtype=float)
    meta = {"path": "recurrence", "n_max": gen_m1.n_max, "kappa": gen_m1.kappa}
    if frame.gamma_minus == 0.0:
        return Spectrum(nu, np.zeros_like(nu), "fluor_lower", meta)
    s = 1j * nu
    seed = regression_seed_fluor(steady)
    X = resolvent_solve_many(gen_m1, s, seed, method=method)
    root = np.sqrt(np.arange(1, gen_m1.n_blocks + 1, dtype=float))
    pop1 = excited_population(steady)
    trace_rho21 = (pop1 + frame.g1 * (X[:, :, 1] @ root)) / (frame.Gamma_c + s)
    values = frame.gamma_minus * trace_rho21.real
    return Spectrum(nu, values, "fluor_lower", meta)


def correlation_at_zero(steady: BlockVector, gen_m1: BlockTridiagonalGenerator, frame: DressedFrame, scale: float = 1e6):
    """Large-shift limit ``s X(s) -> X(0)`` contracted with each observable.

    ``s F(s) = C(0) + C'(0)/s + ...``; combining the shifts ``s`` and ``2s``
    cancels the first correction.  Returns ``(C_cavity(0+), C_fluor(0+))``,
    which should equal ``<n>`` and ``<R12 R21>``.
    """
    rate = max(frame.g1, frame.Gamma_c, gen_m1.kappa, frame.gamma0, 1e-300)
    s = scale * rate * np.array([1.0, 2.0])
    c_cav = s * cavity_transform(steady, gen_m1, s)
    pop1 = excited_population(steady)
    X = resolvent_solve_many(gen_m1, s, regression_seed_fluor(steady))
    root = np.sqrt(np.arange(1, gen_m1.n_blocks + 1, dtype=float))
    c_fl = s * (pop1 + frame.g1 * (X[:, :, 1] @ root)) / (frame.Gamma_c + s)
    return complex(2 * c_cav[1] - c_cav[0]), complex(2 * c_fl[1] - c_fl[0])


@dataclass(frozen=True)
class Peak:
    nu: float
    height: float
    index: int


def find_peaks(spec: Spectrum, rel_height: float = DETECTION_FRACTION) -> list[Peak]:
    """Local maxima above ``rel_height`` of the global maximum.

    Positions are refined by the vertex of the parabola through the maximum
    and its two neighbours.
    """
    y = spec.values
    x = spec.nu
    top = np.max(y) if y.size else 0.0
    if not top > 0:
        return []
    peaks = []
    for i in range(1, y.size - 1):
        if y[i] > y[i - 1] and y[i] >= y[i + 1] and y[i] >= rel_height * top:
            y0, y1, y2 = y[i - 1], y[i], y[i + 1]
            denom = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
            shift = float(np.clip(shift, -0.5, 0.5))
            h = x[i + 1] - x[i] if shift >= 0 else x[i] - x[i - 1]
            peaks.append(Peak(float(x[i] + shift * h), float(y1 - 0.25 * (y0 - y2) * shift), i))
    return peaks


def dominant_peaks(spec: Spectrum) -> list[Peak]:
    return find_peaks(spec, DOMINANT_FRACTION)


def fwhm(spec: Spectrum, index: int | None = None) -> float:
    """Full width at half maximum around a peak, by linear interpolation.

    Returns ``nan`` if the half-maximum crossing leaves the grid.
    """
    y = spec.values
    x = spec.nu
    i = int(np.argmax(y)) if index is None else index
    half = 0.5 * y[i]
    lo = i
    while lo > 0 and y[lo] > half:
        lo -= 1
    hi = i
    while hi < y.size - 1 and y[hi] > half:
        hi += 1
    if y[lo] > half or y[hi] > half:
        return float("nan")
    x_lo = x[lo] + (half - y[lo]) * (x[lo + 1] - x[lo]) / (y[lo + 1] - y[lo])
    x_hi = x[hi - 1] + (half - y[hi - 1]) * (x[hi] - x[hi - 1]) / (y[hi] - y[hi - 1])
    return float(x_hi - x_lo)
