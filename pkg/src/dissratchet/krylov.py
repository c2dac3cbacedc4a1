"""Leading eigenpairs of large non-Hermitian operators by Krylov-Schur restarted Arnoldi.

Operators are consumed matrix-free through :class:`LinearOperatorHandle`.
The Krylov basis is complex throughout, so real operators return their
complex-conjugate pairs as two separate Ritz values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack

from .errors import ConfigurationError, ConvergenceError


@dataclass
class LinearOperatorHandle:
    dimension: int
    apply: Callable[[np.ndarray], np.ndarray]
    label: str = "generic"
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_matrix(cls, A, label="generic"):
        return cls(A.shape[0], lambda v: A @ v, label)

    def check_linear(self, rng=None, probes=2, tol=1e-10) -> bool:
        rng = rng or np.random.default_rng(0)
        for _ in range(probes):
            u, v = (rng.standard_normal(self.dimension) + 1j * rng.standard_normal(self.dimension)
                    for _ in range(2))
            a, b = rng.standard_normal(2) + 1j * rng.standard_normal(2)
            lhs = self.apply(a * u + b * v)
            rhs = a * self.apply(u) + b * self.apply(v)
            if np.linalg.norm(lhs - rhs) > tol * max(np.linalg.norm(rhs), 1.0):
                return False
        return True


@dataclass
class SpectralSet:
    """Ordered leading eigenpairs; ``vectors[:, i]`` belongs to ``values[i]``."""

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    requested: int
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return self.values[i], self.vectors[:, i], self.residuals[i]

    def nearest(self, target: complex) -> int:
        """Index of the eigenvalue closest to ``target``."""
        return int(np.argmin(np.abs(self.values - target)))


def spectral_order(values, pair_tol: float = 1e-6) -> np.ndarray:
    """Permutation sorting by ``|lambda|`` descending, then Re, then Im descending.

    Moduli within ``pair_tol`` count as ties, so numerically split
    conjugate pairs stay adjacent with the positive-imaginary member first.
    """
    values = np.asarray(values)
    order = list(np.lexsort((-values.imag, -values.real, -np.abs(values))))
    out = []
    while order:
        head = order.pop(0)
        group = [head] + [i for i in order if abs(abs(values[i]) - abs(values[head])) <= pair_tol]
        order = [i for i in order if i not in group]
        group.sort(key=lambda i: (-round(values[i].real / pair_tol), -values[i].imag))
        out.extend(group)
    return np.array(out, dtype=int)


def residual(op: LinearOperatorHandle, lam: complex, v) -> float:
    """``||A v - lam v|| / ||v||``."""
    v = np.asarray(v)
    if v.shape != (op.dimension,):
        raise ValueError(f"dimension mismatch: operator {op.dimension}, vector {v.shape}")
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("zero vector has no residual")
    return float(np.linalg.norm(op.apply(v) - lam * v) / nv)


def _orthonormalize(V, w):
    """Classical Gram-Schmidt with one reorthogonalisation pass."""
    h = V.conj().T @ w
    w = w - V @ h
    h2 = V.conj().T @ w
    w = w - V @ h2
    return w, h + h2


def _wanted(theta, count):
    """Boolean mask of the ``count`` largest-modulus Ritz values (pairs kept whole)."""
    order = spectral_order(theta)
    sel = np.zeros(theta.size, dtype=bool)
    sel[order[:count]] = True
    if count < theta.size:
        last, nxt = theta[order[count - 1]], theta[order[count]]
        if abs(last.imag) > 1e-10 and abs(nxt - last.conjugate()) <= 1e-6 * max(1.0, abs(last)):
            sel[order[count]] = True
    return sel


def leading_spectrum(op: LinearOperatorHandle, count: int = 100, subspace_dim: int | None = None,
                     tol: float = 1e-8, max_restarts: int = 1000, seed: int = 0,
                     v0=None) -> SpectralSet:
    """Largest-modulus eigenpairs of ``op`` by Krylov-Schur restarted Arnoldi.

    Parameters
    ----------
    op : LinearOperatorHandle
    count : int
        Number of eigenpairs wanted. If the last one has its complex
        conjugate just outside, the partner is returned too.
    subspace_dim : int, optional
        Krylov subspace size, default ``3 * count`` (clipped to the dimension).
    tol : float
        Bound on every returned residual ``||A v - lam v|| / ||v||``.
    max_restarts : int
    seed : int
        Seeds the random real start vector (ignored when ``v0`` is given).

    Raises
    ------
    ConvergenceError
        After ``max_restarts`` restarts; ``partial`` holds the converged pairs.
    """
    n = op.dimension
    m = min(subspace_dim or 3 * count, n)
    if count < 1 or count > m or (count == m and m < n):
        raise ConfigurationError(
            f"need 1 <= count < subspace_dim <= dimension (count={count}, m={m}, n={n})")
    if tol <= 0:
        raise ConfigurationError("tol must be positive")
    rng = np.random.default_rng(seed)
    V = np.zeros((n, m + 1), dtype=complex)
    H = np.zeros((m + 1, m), dtype=complex)
    v = rng.standard_normal(n) if v0 is None else np.asarray(v0, dtype=complex)
    V[:, 0] = v / np.linalg.norm(v)
    k = 0
    keep = min(m - 1, max(count + 1, (count + m) // 2))
    for restart in range(max_restarts + 1):
        for j in range(k, m):
            w = np.asarray(op.apply(V[:, j]), dtype=complex)
            w, h = _orthonormalize(V[:, :j + 1], w)
            H[:j + 1, j] = h
            beta = np.linalg.norm(w)
            scale = max(np.linalg.norm(h), 1e-300)
            if j + 1 == n:
                H[j + 1, j] = 0.0
                break
            if beta <= 1e-12 * scale:
                # invariant subspace: continue with a fresh orthogonal direction
                for _ in range(5):
                    w, _h = _orthonormalize(V[:, :j + 1], rng.standard_normal(n).astype(complex))
                    if np.linalg.norm(w) > 1e-8:
                        break
                H[j + 1, j] = 0.0
                V[:, j + 1] = w / np.linalg.norm(w)
            else:
                H[j + 1, j] = beta
                V[:, j + 1] = w / beta
        S = H[:m, :m]
        b = H[m, :m]
        theta, Y = la.eig(S)
        Y /= np.linalg.norm(Y, axis=0)
        est = np.abs(b @ Y)
        sel = _wanted(theta, count)
        done = np.all(est[sel] <= tol)
        if done or restart == max_restarts or m == n:
            idx = np.flatnonzero(sel)
            X = V[:, :m] @ Y[:, idx]
            X /= np.linalg.norm(X, axis=0)
            lam = theta[idx]
            res = np.array([residual(op, lam[i], X[:, i]) for i in range(idx.size)])
            if np.all(res <= tol):
                order = spectral_order(lam)
                return SpectralSet(lam[order], X[:, order], res[order], count,
                                   {"label": op.label, "restarts": restart, "subspace_dim": m,
                                    "tol": tol, "seed": seed})
            if restart == max_restarts or m == n:
                ok = res <= tol
                order = spectral_order(lam[ok])
                partial = SpectralSet(lam[ok][order], X[:, ok][:, order], res[ok][order], count,
                                      {"label": op.label, "restarts": restart})
                raise ConvergenceError(
                    f"{int(ok.sum())} of {idx.size} eigenpairs converged after {restart} restarts",
                    partial)
        # Krylov-Schur restart: keep the `keep` largest Ritz values
        T, Q = la.schur(S, output="complex")
        ksel = _wanted(np.diag(T), keep)
        if ksel.sum() >= m:
            # completing a conjugate pair would leave no room to expand
            ksel = _wanted(np.diag(T), keep - 1)
        T, Q, _, nsel, *_rest, info = lapack.ztrsen(ksel.astype(np.int32), T, Q, job="N")
        if info != 0:
            raise ConvergenceError(f"Schur reordering failed (info={info})")
        k = int(nsel)
        V[:, :k] = V[:, :m] @ Q[:, :k]
        V[:, k] = V[:, m]
        newH = np.zeros_like(H)
        newH[:k, :k] = np.triu(T[:k, :k])
        newH[k, :k] = b @ Q[:, :k]
        H = newH
    raise AssertionError("unreachable")
