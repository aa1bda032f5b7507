"""Block-tridiagonal recurrence for the Hermitian density-matrix combinations.

For sideband index ``m`` the unknowns are, for every Fock index ``n``, the
four numbers ``rho^(i)_{n,n+m}`` (i = 1..4) built from the dressed-state
blocks of the density operator::

    rho1 = rho22 + rho11              rho2 = rho22 - rho11
    rho3 = (rho21 a + a^+ rho12) / 2  rho4 = (a rho21 + rho12 a^+) / 2

They obey ``dZ_n/dt = A_n Z_{n-1} + B_n Z_n + C_n Z_{n+1}``.

Truncation
----------
``n_max`` is the photon-number cutoff ``N`` of the underlying Fock space, so a
sector-``m`` vector carries blocks ``n = 0 .. N - m``.  With a cutoff the
identity ``[a, a^+] = 1`` fails on the top level, which changes two entries of
the last block (``closure=True``, the default).  With the closure the
generator is exactly the Liouvillian of the Fock-truncated master equation
restricted to sector ``m``; without it the last block carries the untruncated
closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .params import DressedFrame, Truncation


class NumericalError(RuntimeError):
    """A linear solve or truncation search failed."""


class SingularSystemError(NumericalError):
    pass


class TruncationCapError(NumericalError):
    pass


RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class BlockVector:
    """``data[n, i] = rho^(i+1)_{n, n+m}`` for the blocks kept at cutoff ``n_max``."""

    m: int
    n_max: int
    data: np.ndarray

    def __post_init__(self):
        expected = (self.n_max - self.m + 1, 4)
        if self.data.shape != expected:
            raise ValueError(f"block vector data has shape {self.data.shape}, expected {expected}")

    @classmethod
    def zeros(cls, m: int, n_max: int, dtype=float) -> "BlockVector":
        return cls(m, n_max, np.zeros((n_max - m + 1, 4), dtype=dtype))

    @property
    def n_blocks(self) -> int:
        return self.data.shape[0]

    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)


@dataclass(frozen=True)
class BlockTridiagonalGenerator:
    m: int
    n_max: int
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    frame: DressedFrame = field(repr=False)
    kappa: float = 0.0
    closure: bool = True

    @property
    def n_blocks(self) -> int:
        return self.B.shape[0]

    @property
    def size(self) -> int:
        return 4 * self.n_blocks

    def to_sparse(self) -> sp.csr_matrix:
        """The generator as a ``4(N-m+1)`` square sparse matrix."""
        nb = self.n_blocks
        rows = [[None] * nb for _ in range(nb)]
        for n in range(nb):
            rows[n][n] = self.B[n]
            if n > 0:
                rows[n][n - 1] = self.A[n]
            if n + 1 < nb:
                rows[n][n + 1] = self.C[n]
        if nb == 1:
            return sp.csr_matrix(self.B[0])
        return sp.bmat(rows, format="csr")

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


def alpha(n: int, m: int) -> float:
    return math.sqrt(n * (n + m))


def beta(n: int, m: int) -> float:
    return n + 0.5 * m


def build_generator(
    frame: DressedFrame, kappa: float, m: int, n_max: int, closure: bool = True
) -> BlockTridiagonalGenerator:
    if m not in (0, 1):
        raise ValueError(f"sideband index must be 0 or 1, got {m}")
    if n_max < max(1, m):
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    g1 = frame.g1
    gp, gm, Gc = frame.gamma_plus, frame.gamma_minus, frame.Gamma_c
    nb = n_max - m + 1
    A = np.zeros((nb, 4, 4))
    B = np.zeros((nb, 4, 4))
    C = np.zeros((nb, 4, 4))
    for n in range(nb):
        a_n = alpha(n, m)
        b_n = beta(n, m)
        b_up = beta(n + 1, m)
        c_n = alpha(n + 1, m)

        A[n, 2, 0] = -0.5 * g1 * a_n
        A[n, 2, 1] = 0.5 * g1 * a_n

        B[n] = [
            [-kappa * b_n, 0.0, -2.0 * g1, 2.0 * g1],
            [-(gp - gm), -((gp + gm) + kappa * b_n), -2.0 * g1, -2.0 * g1],
            [0.5 * g1 * b_n, 0.5 * g1 * b_n, -Gc - kappa * (b_n - 0.5), -kappa],
            [-0.5 * g1 * b_up, 0.5 * g1 * b_up, 0.0, -Gc - kappa * (b_n + 0.5)],
        ]

        C[n] = c_n * np.array(
            [
                [kappa, 0.0, 0.0, 0.0],
                [0.0, kappa, 0.0, 0.0],
                [0.0, 0.0, kappa, 0.0],
                [0.5 * g1, 0.5 * g1, 0.0, kappa],
            ]
        )

    if closure:
        # top block n = N - m: a a^+ vanishes on |N>, and [a, a^+] = 1 - (N+1)|N><N|
        n = nb - 1
        top = 0.5 * (n + 1) if n < n_max else 0.0
        B[n, 3, 0] = -0.5 * g1 * top
        B[n, 3, 1] = 0.5 * g1 * top
        B[n, 2, 3] = kappa * n_max
    return BlockTridiagonalGenerator(m, n_max, A, B, C, frame, kappa, closure)


def apply_generator(gen: BlockTridiagonalGenerator, z: BlockVector) -> BlockVector:
    if z.m != gen.m or z.n_max != gen.n_max:
        raise ValueError(
            f"dimension mismatch: vector (m={z.m}, n_max={z.n_max}) vs generator (m={gen.m}, n_max={gen.n_max})"
        )
    x = z.data
    out = np.einsum("nij,nj->ni", gen.B, x)
    out[1:] += np.einsum("nij,nj->ni", gen.A[1:], x[:-1])
    out[:-1] += np.einsum("nij,nj->ni", gen.C[:-1], x[1:])
    return BlockVector(z.m, z.n_max, out)


def steady_state(gen: BlockTridiagonalGenerator, tol: float = RESIDUAL_TOL) -> BlockVector:
    """Stationary sector-0 vector normalised to ``sum_n rho1_nn = 1``.

    The stationary system is singular (trace conservation); the first-component
    equation of block 0 is replaced by the normalisation row.
    """
    if gen.m != 0:
        raise ValueError("steady state requires the m = 0 generator")
    L = gen.to_sparse().tolil()
    size = gen.size
    norm_row = np.zeros(size)
    norm_row[0::4] = 1.0
    L[0, :] = norm_row
    rhs = np.zeros(size)
    rhs[0] = 1.0
    L = L.tocsc()
    try:
        lu = spla.splu(L)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SingularSystemError(f"stationary system is singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("stationary solve produced non-finite values")
    z = BlockVector(0, gen.n_max, x.reshape(-1, 4))
    scale = np.abs(gen.to_sparse()).sum(axis=1).max() * max(np.abs(x).max(), 1.0)
    residual = np.abs(apply_generator(gen, z).data).max()
    if residual > tol * scale:
        raise SingularSystemError(f"stationary residual {residual:.3e} exceeds tolerance")
    populations = z.data[:, 0]
    if populations.min() < -max(tol, 1e-9):
        raise SingularSystemError(f"negative photon-number population {populations.min():.3e}")
    return z


def _as_shifts(shifts) -> np.ndarray:
    return np.atleast_1d(np.asarray(shifts, dtype=complex))


def resolvent_solve_many(
    gen: BlockTridiagonalGenerator, shifts, rhs: BlockVector, method: str = "thomas"
) -> np.ndarray:
    """Solve ``(s - L) X = rhs`` for every shift at once.

    Returns an array of shape ``(len(shifts), n_blocks, 4)``.  ``method`` is
    ``"thomas"`` (forward block elimination from ``n = 0``), ``"mcf"`` (matrix
    continued fraction, eliminating downward from the top block) or
    ``"sparse"`` (sparse LU per shift, reference only).
    """
    if rhs.m != gen.m or rhs.n_max != gen.n_max:
        raise ValueError("dimension mismatch between generator and right-hand side")
    s = _as_shifts(shifts)
    if method == "sparse":
        return _resolvent_sparse(gen, s, rhs)
    try:
        X = _sweep(gen, s, rhs, method)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"resolvent singular at shift(s) {_offending(gen, s, rhs, method)}") from exc
    if not np.all(np.isfinite(X)):
        bad = s[~np.all(np.isfinite(X), axis=(1, 2))]
        raise SingularSystemError(f"resolvent singular at shift(s) {bad[:5]}")
    return X


def _offending(gen, s, rhs, method):
    bad = []
    for sk in s:
        try:
            ok = np.all(np.isfinite(_sweep(gen, sk[None], rhs, method)))
        except np.linalg.LinAlgError:
            ok = False
        if not ok:
            bad.append(complex(sk))
    return bad[:5]


def _sweep(gen, s, rhs, method):
    if method == "thomas":
        X = _chunked(_block_thomas, gen.A, gen.B, gen.C, s, rhs.data)
    elif method == "mcf":
        # reversing the block order turns the top-down continued fraction into a forward sweep
        A_rev = np.zeros_like(gen.A)
        A_rev[1:] = gen.C[::-1][1:]
        C_rev = np.zeros_like(gen.C)
        C_rev[:-1] = gen.A[::-1][:-1]
        X = _chunked(_block_thomas, A_rev, gen.B[::-1], C_rev, s, rhs.data[::-1])[:, ::-1]
    else:
        raise ValueError(f"unknown resolvent method {method!r}")
    return X


# complex entries held by the forward sweep before the shifts are split up
_BATCH_ENTRIES = 1 << 22


def _chunked(solver, A, B, C, s, r):
    per_shift = B.shape[0] * 20
    step = max(1, _BATCH_ENTRIES // per_shift)
    if s.shape[0] <= step:
        return solver(A, B, C, s, r)
    return np.concatenate([solver(A, B, C, s[i : i + step], r) for i in range(0, s.shape[0], step)])


def _block_thomas(A, B, C, s, r):
    nb = B.shape[0]
    ns = s.shape[0]
    eye = np.eye(4)
    # M_nn = s - B_n, M_{n,n-1} = -A_n, M_{n,n+1} = -C_n
    D = np.empty((nb, ns, 4, 4), dtype=complex)
    y = np.empty((nb, ns, 4), dtype=complex)
    D[0] = s[:, None, None] * eye - B[0]
    y[0] = np.broadcast_to(r[0], (ns, 4))
    with np.errstate(all="ignore"):
        for n in range(1, nb):
            # W = M_{n,n-1} D_{n-1}^{-1}; solve via transpose to stay batched
            W = np.linalg.solve(np.swapaxes(D[n - 1], -1, -2), np.broadcast_to(-A[n].T, (ns, 4, 4)))
            W = np.swapaxes(W, -1, -2)
            D[n] = s[:, None, None] * eye - B[n] + W @ C[n - 1]
            y[n] = r[n] - np.einsum("sij,sj->si", W, y[n - 1])
        X = np.empty((ns, nb, 4), dtype=complex)
        X[:, nb - 1] = np.linalg.solve(D[nb - 1], y[nb - 1][..., None])[..., 0]
        for n in range(nb - 2, -1, -1):
            rhs = y[n] + np.einsum("ij,sj->si", C[n], X[:, n + 1])
            X[:, n] = np.linalg.solve(D[n], rhs[..., None])[..., 0]
    return X


def _resolvent_sparse(gen, s, rhs):
    L = gen.to_sparse().tocsc().astype(complex)
    ident = sp.identity(gen.size, format="csc", dtype=complex)
    b = rhs.flat().astype(complex)
    out = np.empty((s.shape[0], gen.n_blocks, 4), dtype=complex)
    for k, sk in enumerate(s):
        try:
            out[k] = spla.splu(sk * ident - L).solve(b).reshape(-1, 4)
        except RuntimeError as exc:
            raise SingularSystemError(f"resolvent singular at shift {sk}: {exc}") from exc
    return out


def resolvent_solve(gen: BlockTridiagonalGenerator, shift: complex, rhs: BlockVector, method: str = "thomas") -> BlockVector:
    X = resolvent_solve_many(gen, [shift], rhs, method=method)[0]
    return BlockVector(rhs.m, rhs.n_max, X)


@dataclass(frozen=True)
class TruncationResult:
    n_max: int
    tail_mass: float
    steady: BlockVector
    attempts: tuple = ()


def auto_truncate(frame: DressedFrame, kappa: float, policy: Optional[Truncation] = None) -> TruncationResult:
    """Double the cutoff until the top-level photon population is below ``tail_eps``."""
    policy = policy or Truncation()
    if frame.gamma_plus > 0 and frame.gamma_minus + kappa <= 0:
        raise TruncationCapError(
            "photon ladder is not closed: gamma_plus > 0 with gamma_minus = kappa = 0 never converges"
        )
    n = policy.start
    attempts = []
    while True:
        n = min(n, policy.cap)
        gen = build_generator(frame, kappa, 0, n)
        z = steady_state(gen)
        tail = float(abs(z.data[-1, 0]))
        attempts.append((n, tail))
        if tail < policy.tail_eps:
            return TruncationResult(n, tail, z, tuple(attempts))
        if n >= policy.cap:
            raise TruncationCapError(
                f"tail population {tail:.3e} still above {policy.tail_eps:.1e} at cap n_max={policy.cap}"
            )
        n *= 2
