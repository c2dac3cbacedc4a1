"""One-period quantum channel of the dissipative kicked ratchet.

A period is, in order: momentum damping by the two Lindblad jump operators
(lowering ``|n|`` towards zero, integrated exactly over unit time with
``g**2 = -ln(gamma)``), the kick ``exp(-i k V(x))``, and free rotation
``exp(-i hbar_eff n**2 / 2)``. The stroboscopic state therefore sits at the
same point of the cycle as the classical map output.

The damping never couples different diagonals ``d = n - m`` of the density
matrix, so its exponential is precomputed per diagonal; along a diagonal it
only links neighbouring elements, which splits each diagonal into short
bidiagonal chains.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .errors import ConfigurationError
from .krylov import LinearOperatorHandle
from .mapcore import MapParams

CHOI_MAX_N = 15


@dataclass(frozen=True)
class HilbertSpec:
    """Truncated momentum space ``n = -(N-1)/2 .. (N-1)/2`` with position grid ``2 pi j / N``."""

    N: int
    hbar_eff: float

    def __post_init__(self):
        if self.N < 3 or self.N % 2 == 0:
            raise ConfigurationError(f"N must be an odd integer >= 3, got {self.N}")
        if not self.hbar_eff > 0:
            raise ConfigurationError("hbar_eff must be positive")

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.N) - (self.N - 1) // 2

    @property
    def positions(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.N) / self.N

    @property
    def p_max(self) -> float:
        """Realised momentum half-window ``N * hbar_eff / 2``."""
        return self.N * self.hbar_eff / 2.0

    def dft_matrix(self) -> np.ndarray:
        """Dense unitary ``F[j, n] = exp(i n x_j) / sqrt(N)`` (position <- momentum)."""
        return np.exp(1j * np.outer(self.positions, self.levels)) / np.sqrt(self.N)

    def _phase(self):
        c = (self.N - 1) // 2
        return np.exp(-2j * np.pi * c * np.arange(self.N) / self.N)

    def _F(self, A):
        return np.sqrt(self.N) * self._phase()[:, None] * np.fft.ifft(A, axis=0)

    def _Fh(self, B):
        return np.fft.fft(self._phase().conj()[:, None] * B, axis=0) / np.sqrt(self.N)

    def to_position(self, rho: np.ndarray) -> np.ndarray:
        """``F rho F^dagger`` via FFTs."""
        return self._F(self._F(rho).conj().T).conj().T

    def to_momentum(self, sigma: np.ndarray) -> np.ndarray:
        return self._Fh(self._Fh(sigma).conj().T).conj().T


def build_hilbert(hbar_eff: float, p_max: float) -> HilbertSpec:
    """Pick the odd ``N`` nearest to ``2 p_max / hbar_eff`` (ties round up)."""
    if not (hbar_eff > 0 and p_max > 0):
        raise ConfigurationError("hbar_eff and p_max must be positive")
    ratio = 2.0 * p_max / hbar_eff
    if ratio < 3:
        raise ConfigurationError("window/ħ too small: fewer than 3 momentum levels")
    return HilbertSpec(2 * int(np.floor(ratio / 2 + 1e-12)) + 1, hbar_eff)


@dataclass
class DensityMatrix:
    """N x N operator in the momentum (default) or position basis.

    Eigenvector payloads carry the eigenvalue they belong to and are exempt
    from the state checks.
    """

    data: np.ndarray
    basis: str = "momentum"
    eigenvalue: complex | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.ndim != 2 or self.data.shape[0] != self.data.shape[1]:
            raise ValueError("density matrix must be square")
        if self.basis not in ("momentum", "position"):
            raise ValueError(f"unknown basis {self.basis!r}")

    @property
    def N(self) -> int:
        return self.data.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def in_basis(self, basis: str, spec: HilbertSpec) -> "DensityMatrix":
        if basis == self.basis:
            return self
        if basis == "position":
            data = spec.to_position(self.data)
        else:
            data = spec.to_momentum(self.data)
        return DensityMatrix(data, basis, self.eigenvalue)

    def is_physical(self, tol=1e-12, psd_tol=1e-10) -> bool:
        """Hermitian, unit trace and positive semidefinite within tolerances."""
        d = self.data
        if np.abs(d - d.conj().T).max() > tol:
            return False
        if abs(np.trace(d) - 1) > tol:
            return False
        return bool(np.linalg.eigvalsh((d + d.conj().T) / 2).min() >= -psd_tol)


def kick_unitary(spec: HilbertSpec, params: MapParams) -> np.ndarray:
    """Diagonal kick ``exp(-i k [cos x_j + (a/2) cos(2 x_j + phi)])`` in the position basis."""
    x = spec.positions
    return np.exp(-1j * params.k * (np.cos(x) + 0.5 * params.a * np.cos(2 * x + params.phi)))


def free_phases(spec: HilbertSpec) -> np.ndarray:
    """Per-level phase ``exp(-i hbar_eff n**2 / 2)`` of one period of free rotation."""
    n = spec.levels.astype(float)
    return np.exp(-0.5j * spec.hbar_eff * n * n)


@dataclass
class _Diagonal:
    rows: np.ndarray
    cols: np.ndarray
    factor: np.ndarray               # decay of elements outside any chain
    chains: list = field(default_factory=list)  # (start, stop, propagator)


@dataclass
class DissipativeBlocks:
    """Exact one-period damping propagators, one per diagonal offset ``d = n - m``."""

    spec: HilbertSpec
    gamma: float
    diagonals: dict

    @property
    def g(self) -> float:
        return float(np.sqrt(-np.log(self.gamma)))

    def block(self, d: int) -> np.ndarray:
        """Dense ``(N-|d|) x (N-|d|)`` propagator acting on diagonal ``d``."""
        diag = self.diagonals[d]
        P = np.diag(diag.factor).astype(float)
        for s, e, chain in diag.chains:
            P[s:e, s:e] = chain
        return P

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = np.empty_like(rho)
        for diag in self.diagonals.values():
            v = rho[diag.rows, diag.cols]
            w = diag.factor * v
            for s, e, chain in diag.chains:
                w[s:e] = chain @ v[s:e]
            out[diag.rows, diag.cols] = w
        return out

    @classmethod
    def identity(cls, spec: HilbertSpec) -> "DissipativeBlocks":
        diagonals = {}
        for d in range(-(spec.N - 1), spec.N):
            rows, cols = _diagonal_indices(spec.N, d)
            diagonals[d] = _Diagonal(rows, cols, np.ones(rows.size))
        return cls(spec, 1.0, diagonals)


def _diagonal_indices(N, d):
    if d >= 0:
        rows = np.arange(d, N)
        return rows, rows - d
    cols = np.arange(-d, N)
    return cols + d, cols


def build_dissipative_blocks(spec: HilbertSpec, gamma: float, feeding_sign: float = 1.0) -> DissipativeBlocks:
    """Exponentiate the damping generator over one period, diagonal by diagonal.

    On diagonal ``d`` the element ``rho[n, m]`` decays at rate
    ``g**2 (|n| + |m|) / 2`` and is fed by ``g**2 sqrt((n+1)(m+1)) rho[n+1, m+1]``
    when ``n, m >= 0`` and by ``g**2 sqrt((|n|+1)(|m|+1)) rho[n-1, m-1]``
    when ``n, m <= 0``. ``feeding_sign`` exists only to build deliberately
    broken channels in tests.
    """
    if not 0.0 < gamma < 1.0:
        raise ConfigurationError(f"gamma must lie strictly inside (0, 1), got {gamma}")
    g2 = -np.log(gamma)
    lev = spec.levels
    diagonals = {}
    for d in range(-(spec.N - 1), spec.N):
        rows, cols = _diagonal_indices(spec.N, d)
        n, m = lev[rows], lev[cols]
        rate = -0.5 * g2 * (np.abs(n) + np.abs(m))
        up = np.zeros(n.size - 1)    # element t fed by t+1
        down = np.zeros(n.size - 1)  # element t+1 fed by t
        pos = (n[:-1] >= 0) & (m[:-1] >= 0)
        up[pos] = g2 * np.sqrt((n[:-1][pos] + 1.0) * (m[:-1][pos] + 1.0))
        neg = (n[1:] <= 0) & (m[1:] <= 0)
        down[neg] = g2 * np.sqrt((np.abs(n[1:][neg]) + 1.0) * (np.abs(m[1:][neg]) + 1.0))
        up *= feeding_sign
        down *= feeding_sign
        linked = (up != 0) | (down != 0)
        diag = _Diagonal(rows, cols, np.exp(rate))
        t = 0
        while t < linked.size:
            if not linked[t]:
                t += 1
                continue
            s = t
            while t < linked.size and linked[t]:
                t += 1
            e = t + 1
            G = np.diag(rate[s:e]) + np.diag(up[s:e - 1], 1) + np.diag(down[s:e - 1], -1)
            diag.chains.append((s, e, la.expm(G)))
        diagonals[d] = diag
    return DissipativeBlocks(spec, gamma, diagonals)


@dataclass
class SuperPropagator:
    """The one-period channel ``rho -> e^Lambda rho`` (momentum basis)."""

    spec: HilbertSpec
    params: MapParams
    kick: np.ndarray
    blocks: DissipativeBlocks
    free: np.ndarray

    @property
    def gamma(self) -> float:
        return self.blocks.gamma

    @property
    def g(self) -> float:
        return self.blocks.g

    def apply_array(self, rho: np.ndarray) -> np.ndarray:
        spec = self.spec
        out = self.blocks.apply(rho)
        out = spec.to_position(out)
        out = self.kick[:, None] * out * self.kick.conj()[None, :]
        out = spec.to_momentum(out)
        return self.free[:, None] * out * self.free.conj()[None, :]

    def as_operator(self) -> LinearOperatorHandle:
        """Matrix-free handle on vectorised (row-major) density matrices."""
        N = self.spec.N
        return LinearOperatorHandle(N * N, lambda v: self.apply_array(v.reshape(N, N)).ravel(),
                                    label="quantum", meta={"N": N})


def build_propagator(spec: HilbertSpec, params: MapParams) -> SuperPropagator:
    if not np.isclose(spec.hbar_eff, params.hbar_eff, rtol=1e-12, atol=0):
        raise ConfigurationError("HilbertSpec and MapParams disagree on hbar_eff")
    return SuperPropagator(spec, params, kick_unitary(spec, params),
                           build_dissipative_blocks(spec, params.gamma), free_phases(spec))


def apply_superoperator(prop: SuperPropagator, rho: DensityMatrix) -> DensityMatrix:
    if rho.basis != "momentum":
        raise ValueError("apply_superoperator expects a momentum-basis operator")
    if rho.N != prop.spec.N:
        raise ValueError(f"dimension mismatch: channel N={prop.spec.N}, operator N={rho.N}")
    return DensityMatrix(prop.apply_array(rho.data), "momentum")


def choi_matrix(prop: SuperPropagator) -> np.ndarray:
    N = prop.spec.N
    C = np.zeros((N, N, N, N), dtype=complex)
    unit = np.zeros((N, N), dtype=complex)
    for i in range(N):
        for j in range(N):
            unit[i, j] = 1.0
            C[i, :, j, :] = prop.apply_array(unit)
            unit[i, j] = 0.0
    return C.reshape(N * N, N * N)


def choi_positivity_check(prop: SuperPropagator, tol: float = 1e-8):
    """Return ``(passed, min_eigenvalue)`` of the channel's Choi matrix.

    Only feasible for ``N <= 15`` (the Choi matrix is ``N^2 x N^2``).
    """
    if prop.spec.N > CHOI_MAX_N:
        raise ConfigurationError(
            f"Choi check needs N <= {CHOI_MAX_N} (got {prop.spec.N}); "
            "build a small-N propagator with the same parameters instead")
    C = choi_matrix(prop)
    herm_err = np.abs(C - C.conj().T).max()
    lam = float(np.linalg.eigvalsh((C + C.conj().T) / 2).min())
    return bool(lam >= -tol and herm_err <= max(tol, 1e-10)), lam
