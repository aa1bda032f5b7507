"""Dense reference Liouvillian on the truncated atom x Fock space.

Everything here is deliberately brute force: full ``dim^2 x dim^2``
superoperators, dense LU per frequency.  It exists to cross-check the
recurrence engine and to supply the central and upper fluorescence sidebands,
which the recurrence does not cover.  Keep ``n_max`` below ~30.

Basis ordering is ``index = atom * (n_max + 1) + n`` with atom 0 = |1~>,
atom 1 = |2~>.  Superoperators act on row-major flattened operators, so
``vec(A X B) = kron(A, B.T) vec(X)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .engine import BlockVector, NumericalError, SingularSystemError
from .params import DressedFrame
from .spectra import Spectrum


class DegenerateNullSpaceError(NumericalError):
    pass


def destroy(n_max: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_max + 1, dtype=float)), 1)


def _spre(A):
    return np.kron(A, np.eye(A.shape[0]))


def _spost(B):
    return np.kron(np.eye(B.shape[0]), B.T)


def _dissipator(c):
    cdc = c.conj().T @ c
    return 2.0 * np.kron(c, c.conj()) - _spre(cdc) - _spost(cdc)


@dataclass(frozen=True)
class FullLiouvillian:
    n_max: int
    frame: DressedFrame = field(repr=False)
    kappa: float
    generator: np.ndarray = field(repr=False)
    ops: dict = field(repr=False)

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        d = self.dim
        return (self.generator @ rho.reshape(-1)).reshape(d, d)


def build_liouvillian(frame: DressedFrame, kappa: float, n_max: int) -> FullLiouvillian:
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    nf = n_max + 1
    I_f = np.eye(nf)
    I_a = np.eye(2)
    a = np.kron(I_a, destroy(n_max))
    ad = a.T.copy()
    R12 = np.kron(np.array([[0.0, 1.0], [0.0, 0.0]]), I_f)
    R21 = R12.T.copy()
    R3 = np.kron(np.diag([-1.0, 1.0]), I_f)
    ops = {"a": a, "ad": ad, "R12": R12, "R21": R21, "R3": R3}

    h = R12 @ a - ad @ R21
    L = frame.g1 * (_spre(h) - _spost(h))
    L += 0.5 * kappa * _dissipator(a)
    L += 0.125 * frame.gamma0 * _dissipator(R3)
    L += 0.5 * frame.gamma_minus * _dissipator(R21)
    L += 0.5 * frame.gamma_plus * _dissipator(R12)
    return FullLiouvillian(n_max, frame, kappa, L, ops)


def dressed_blocks(rho: np.ndarray, n_max: int):
    """Split an operator into its cavity-space dressed blocks ``rho_ij``."""
    nf = n_max + 1
    r = rho.reshape(2, nf, 2, nf)
    return {"11": r[0, :, 0, :], "22": r[1, :, 1, :], "12": r[0, :, 1, :], "21": r[1, :, 0, :]}


def project(rho: np.ndarray, n_max: int, m: int) -> BlockVector:
    """Sector-``m`` Hermitian combinations of an operator on the truncated space."""
    b = dressed_blocks(rho, n_max)
    a = destroy(n_max)
    ad = a.T
    combos = [
        b["22"] + b["11"],
        b["22"] - b["11"],
        0.5 * (b["21"] @ a + ad @ b["12"]),
        0.5 * (a @ b["21"] + b["12"] @ ad),
    ]
    n = np.arange(n_max - m + 1)
    data = np.stack([c[n, n + m] for c in combos], axis=1)
    if np.isrealobj(rho):
        data = data.real
    return BlockVector(m, n_max, data)


def oracle_steady_state(L: FullLiouvillian, rcond_tol: float = 1e-13) -> np.ndarray:
    """Unit-trace stationary density operator.

    The trace condition replaces one row of the stationary system; a
    numerically singular result means the null space is not one-dimensional.
    """
    d = L.dim
    M = L.generator.copy()
    trace_row = np.eye(d).reshape(-1)
    M[0, :] = trace_row
    rhs = np.zeros(d * d)
    rhs[0] = 1.0
    with warnings.catch_warnings():
        # singularity is judged by the condition estimate below
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(M)
    anorm = np.abs(M).sum(axis=0).max()
    rcond, _ = sla.lapack.dgecon(lu, anorm)
    if rcond < rcond_tol:
        raise DegenerateNullSpaceError(f"stationary subspace is not one-dimensional (rcond={rcond:.2e})")
    rho = sla.lu_solve((lu, piv), rhs).reshape(d, d)
    rho = 0.5 * (rho + rho.T)
    return rho


def generator_eigenvalues(L: FullLiouvillian) -> np.ndarray:
    return np.linalg.eigvals(L.generator)


_KINDS = {
    # kind: (B operator, B^+ operator, prefactor attribute or None, shift sign, overall factor)
    "cavity": ("a", "ad", None, -1, 2.0),
    "fluor_lower": ("R21", "R12", "gamma_minus", +1, 1.0),
    "fluor_central": ("R3", "R3", "gamma0", +1, 0.25),
    "fluor_upper": ("R12", "R21", "gamma_plus", +1, 1.0),
}


def _seed_and_observable(L: FullLiouvillian, rho_s, B, Bd):
    mean_B = np.trace(B @ rho_s)
    seed = (B @ rho_s - mean_B * rho_s).reshape(-1).astype(complex)
    obs = Bd.T.reshape(-1)  # Tr[Bd X] = sum_ij Bd_ji X_ij
    return seed, obs


def oracle_correlation_transform(L: FullLiouvillian, rho_s: np.ndarray, B: np.ndarray, Bd: np.ndarray, shifts) -> np.ndarray:
    """``Tr[B^+ (s - L)^{-1} (B rho_s - <B> rho_s)]`` for each shift ``s``.

    The seed is traceless, so adding the rank-one term ``vec(rho_s) tr(.)``
    leaves the solution unchanged while lifting the zero eigenvalue of ``L``;
    the solve then stays well posed at ``s = 0``.
    """
    d = L.dim
    seed, obs = _seed_and_observable(L, rho_s, B, Bd)
    lifted = -L.generator + np.outer(rho_s.reshape(-1), np.eye(d).reshape(-1))
    ident = np.eye(d * d)
    out = np.empty(len(shifts), dtype=complex)
    for k, s in enumerate(shifts):
        try:
            x = sla.solve(s * ident + lifted, seed, check_finite=False)
        except (sla.LinAlgError, ValueError) as exc:
            raise SingularSystemError(f"oracle resolvent singular at shift {s}: {exc}") from exc
        out[k] = obs @ x
    return out


def time_domain_transform(L: FullLiouvillian, rho_s, B, Bd, shifts, t_max: float) -> np.ndarray:
    """``int_0^t_max exp(-s t) C(t) dt`` with ``C(t) = Tr[B^+ exp(L t) seed]``.

    Evaluated by exponentiating the generator augmented with an integrating
    row, so the quadrature is exact up to the cutoff ``t_max``.
    """
    seed, obs = _seed_and_observable(L, rho_s, B, Bd)
    D = L.generator.shape[0]
    out = np.empty(len(shifts), dtype=complex)
    for k, s in enumerate(shifts):
        M = np.zeros((D + 1, D + 1), dtype=complex)
        M[:D, :D] = L.generator - s * np.eye(D)
        M[D, :D] = obs
        v = sla.expm(M * t_max) @ np.concatenate([seed, [0.0]])
        out[k] = v[D]
    return out


def oracle_spectrum(L: FullLiouvillian, rho_s: np.ndarray, kind: str, nu, shift_sign=None) -> Spectrum:
    """Spectrum of the given kind from the dense Liouvillian.

    ``cavity`` is ``2 Re`` of the transform at ``s = -i nu``; the fluorescence
    sidebands are ``rate * Re`` at ``s = +i nu`` with rates ``gamma_minus``,
    ``gamma0 / 4`` and ``gamma_plus`` for lower, central and upper.
    """
    if kind not in _KINDS:
        raise ValueError(f"unknown spectrum kind {kind!r}")
    b_name, bd_name, rate_attr, default_sign, factor = _KINDS[kind]
    sign = default_sign if shift_sign is None else shift_sign
    nu = np.asarray(nu, dtype=float)
    rate = 1.0 if rate_attr is None else getattr(L.frame, rate_attr)
    if rate == 0.0:
        values = np.zeros_like(nu)
    else:
        t = oracle_correlation_transform(L, rho_s, L.ops[b_name], L.ops[bd_name], sign * 1j * nu)
        values = factor * rate * t.real
    return Spectrum(nu, values, kind, {"path": "oracle", "n_max": L.n_max, "kappa": L.kappa})
