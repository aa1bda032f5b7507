"""One full model evaluation: rates, truncation, steady state and both spectra."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import BlockTridiagonalGenerator, BlockVector, auto_truncate, build_generator, steady_state
from .params import ConfigError, DressedFrame, ModelConfig, derive_dressed, validate_regime
from .spectra import Spectrum, cavity_spectrum, fluor_lower_spectrum


@dataclass
class Solution:
    config: ModelConfig
    frame: DressedFrame
    n_max: int
    tail_mass: float
    steady: BlockVector
    gen_m1: BlockTridiagonalGenerator
    cavity: Spectrum
    fluor_lower: Spectrum
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)


def scale_pump(frame: DressedFrame, factor: float) -> DressedFrame:
    """Frame with ``gamma_plus`` multiplied by ``factor`` and ``Gamma_c`` updated."""
    if not (math.isfinite(factor) and factor >= 0):
        raise ConfigError("gamma_plus_scale", "must be a finite number >= 0")
    gp = frame.gamma_plus * factor
    return replace(frame, gamma_plus=gp, Gamma_c=0.5 * (frame.gamma0 + gp + frame.gamma_minus))


def _split(nu: np.ndarray, parts: int):
    return [c for c in np.array_split(nu, parts) if c.size]


def evaluate_spectra(steady, gen_m1, frame, nu, method="thomas", threads=1):
    """Cavity and lower-sideband spectra, optionally over grid chunks in parallel.

    Every grid point is solved independently, so chunking does not change the
    values.
    """
    nu = np.asarray(nu, dtype=float)
    if threads <= 1 or nu.size < 2 * threads:
        return (
            cavity_spectrum(steady, gen_m1, nu, method=method),
            fluor_lower_spectrum(steady, gen_m1, frame, nu, method=method),
        )
    chunks = _split(nu, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        cav = list(pool.map(lambda c: cavity_spectrum(steady, gen_m1, c, method=method), chunks))
        flu = list(pool.map(lambda c: fluor_lower_spectrum(steady, gen_m1, frame, c, method=method), chunks))
    cavity = Spectrum(nu, np.concatenate([s.values for s in cav]), "cavity", cav[0].meta)
    fluor = Spectrum(nu, np.concatenate([s.values for s in flu]), "fluor_lower", flu[0].meta)
    return cavity, fluor


def solve(
    cfg: ModelConfig,
    gamma_plus_scale: float = 1.0,
    method: str = "thomas",
    threads: int = 1,
    frame: DressedFrame | None = None,
) -> Solution:
    timings = {}
    t0 = time.perf_counter()
    if frame is None:
        frame = derive_dressed(cfg)
    if gamma_plus_scale != 1.0:
        frame = scale_pump(frame, gamma_plus_scale)
    warnings = validate_regime(cfg, frame)
    t1 = time.perf_counter()
    timings["rates"] = t1 - t0

    trunc = cfg.truncation
    if trunc.adaptive:
        result = auto_truncate(frame, cfg.kappa, trunc)
        n_max, tail, steady = result.n_max, result.tail_mass, result.steady
    else:
        n_max = trunc.n_max
        steady = steady_state(build_generator(frame, cfg.kappa, 0, n_max))
        tail = float(abs(steady.data[-1, 0]))
    t2 = time.perf_counter()
    timings["steady_state"] = t2 - t1

    gen_m1 = build_generator(frame, cfg.kappa, 1, n_max)
    cavity, fluor = evaluate_spectra(steady, gen_m1, frame, cfg.resolved_grid().values(), method, threads)
    timings["spectra"] = time.perf_counter() - t2
    return Solution(cfg, frame, n_max, tail, steady, gen_m1, cavity, fluor, warnings, timings)
