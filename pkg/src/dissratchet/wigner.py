"""Discrete Weyl-Wigner symbols, ghost removal by chord truncation, and overlaps.

For an ``N``-level operator the raw symbol lives on the redundant
``2N x 2N`` grid of half-integer points ``(a, b)``; it is stored indexed by
``(A, B) = (2a, 2b)``. ``b`` labels position (``x = 2 pi b / N``) and the
integer ``a`` maps to momentum level ``-a (mod N)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .lindblad import DensityMatrix, HilbertSpec
from .phasespace import PhaseField, UlamGrid


@dataclass(frozen=True)
class ChordCutoff:
    """Keep chords ``xi`` with ``|xi| <= radius`` (hard disk, lattice units).

    Chords are the frequencies of the ``2N x 2N`` symbol, in ``[-N, N)`` per
    axis; ``radius >= sqrt(2) N`` keeps everything.
    """

    radius: float

    @classmethod
    def default(cls, N: int) -> "ChordCutoff":
        """Radius ``N / 8``, well inside the ``N / 2`` needed to drop the ghosts.

        Chosen so that invariant-state overlaps of the reference scenarios
        match published values; below ``N / 2`` overlaps grow with the radius.
        """
        return cls(N / 8.0)

    @classmethod
    def none(cls, N: int) -> "ChordCutoff":
        return cls(np.sqrt(2.0) * N)

    def validate(self, N: int):
        if not 0 < self.radius <= np.sqrt(2.0) * N + 1e-9:
            raise ConfigurationError(f"chord radius must lie in (0, sqrt(2) N], got {self.radius}")


def weyl_symbol(rho: DensityMatrix, p_max: float | None = None) -> PhaseField:
    """Raw symbol ``R[A, B] = sum_n <q_{B-n}|R|q_n> exp(i pi A (B - 2n) / N)``.

    Position indices are taken modulo ``N``. Linear in ``rho``; real for
    Hermitian operators.
    """
    if rho.basis != "position":
        raise ValueError("weyl_symbol needs a position-basis operator")
    N = rho.N
    r = rho.data
    B = np.arange(2 * N)
    n = np.arange(N)
    gathered = r[(B[:, None] - n[None, :]) % N, n[None, :]]
    # sum over n of exp(-2 pi i A n / N), evaluated for A mod N
    spectrum = np.fft.fft(gathered, axis=1)
    A = np.arange(2 * N)
    values = spectrum[:, A % N].T * np.exp(1j * np.pi * np.outer(A, B) / N)
    return PhaseField(values, kind="weyl", p_max=N / 2.0 if p_max is None else p_max,
                      meta={"N": N, "eigenvalue": rho.eigenvalue})


def symbol_trace(sym: PhaseField) -> complex:
    """``Tr rho`` recovered from a raw symbol.

    Summing ``R[A, B]`` over all ``A`` and the even ``B`` gives ``2 N Tr rho``;
    odd columns sum to zero.
    """
    N = sym.values.shape[0] // 2
    return complex(sym.values[:, ::2].sum() / (2 * N))


def integer_subsample(sym: PhaseField) -> np.ndarray:
    """Integer points of a raw symbol, reordered to (momentum ascending, position)."""
    return _to_momentum_rows(sym.values[::2, ::2])


def _to_momentum_rows(values):
    N = values.shape[0]
    a = np.arange(N)
    rows = (-a) % N
    rows = np.where(rows > (N - 1) // 2, rows - N, rows) + (N - 1) // 2
    out = np.empty_like(values)
    out[rows] = values
    return out


def chord_filter(sym: PhaseField, cut: ChordCutoff | float | None = None) -> PhaseField:
    """Remove ghost images by truncating long chords, then keep the ``N x N`` integer grid.

    The symbol is Fourier transformed to its chord representation, chords
    longer than the cutoff radius are zeroed, and the result is transformed
    back and sampled at the integer points.
    """
    if sym.values.shape[0] != sym.values.shape[1] or sym.values.shape[0] % 2:
        raise ValueError("chord_filter needs a raw 2N x 2N Weyl symbol")
    N = sym.values.shape[0] // 2
    if cut is None:
        cut = ChordCutoff.default(N)
    elif not isinstance(cut, ChordCutoff):
        cut = ChordCutoff(float(cut))
    cut.validate(N)
    xi = np.fft.fftfreq(2 * N, d=1.0 / (2 * N))
    keep = xi[:, None] ** 2 + xi[None, :] ** 2 <= cut.radius ** 2 * (1 + 1e-12)
    if keep.all():
        filtered = sym.values[::2, ::2]
    else:
        filtered = np.fft.ifft2(np.fft.fft2(sym.values) * keep)[::2, ::2]
    meta = dict(sym.meta, chord_radius=cut.radius)
    return PhaseField(_to_momentum_rows(filtered), kind="wigner", p_max=sym.p_max, meta=meta)


def wigner_field(rho: DensityMatrix, spec: HilbertSpec, cut: ChordCutoff | float | None = None) -> PhaseField:
    """Filtered ``N x N`` Wigner field of an operator given in either basis."""
    pos = rho.in_basis("position", spec)
    return chord_filter(weyl_symbol(pos, spec.p_max), cut)


def classical_field(vector, grid: UlamGrid, eigenvalue=None) -> PhaseField:
    """Ulam eigenvector as a (momentum, position) field."""
    return PhaseField(grid.reshape(vector), kind="classical", p_max=grid.p_max,
                      meta={"eigenvalue": eigenvalue})


def _is_real(lam, tol=1e-8):
    return lam is None or abs(np.imag(lam)) <= tol * max(1.0, abs(lam))


def fix_phase(payload, eigenvalue=None, kind: str = "operator"):
    """Remove the arbitrary global phase of an eigenvector.

    For a real eigenvalue the phase making the payload as Hermitian
    (``kind="operator"``) or as real (``kind="vector"``) as possible is
    applied, with the sign chosen so the trace (or sum) is positive. For a
    complex eigenvalue the largest-modulus entry is made real positive,
    which hands conjugate partners conjugate phases.
    """
    is_dm = isinstance(payload, DensityMatrix)
    V = np.asarray(payload.data if is_dm else payload, dtype=complex)
    norm = np.linalg.norm(V)
    if norm == 0:
        raise ValueError("cannot fix the phase of a zero vector")
    if kind not in ("operator", "vector"):
        raise ValueError(f"unknown payload kind {kind!r}")
    if _is_real(eigenvalue):
        c = np.trace(V @ V) if kind == "operator" else np.sum(V * V)
        theta = -0.5 * np.angle(c) if abs(c) > 1e-14 * norm**2 else 0.0
        out = np.exp(1j * theta) * V
        total = np.trace(out) if kind == "operator" else out.sum()
        if abs(total) > 1e-8 * norm:
            ref = total.real
        else:
            flat = np.diag(out) if kind == "operator" else out.ravel()
            ref = flat[np.argmax(np.abs(flat))].real
        if ref < 0:
            out = -out
    else:
        flat = V.ravel()
        out = V * np.exp(-1j * np.angle(flat[np.argmax(np.abs(flat))]))
    if is_dm:
        return DensityMatrix(out, payload.basis, payload.eigenvalue)
    return out


def overlap(R1: PhaseField, R2: PhaseField) -> complex:
    """Normalised phase-space overlap ``sum R1 conj(R2) / sqrt(sum|R1|^2 sum|R2|^2)``."""
    if not R1.same_grid(R2):
        raise ValueError(f"grid mismatch: {R1.shape} (p_max={R1.p_max}) vs "
                         f"{R2.shape} (p_max={R2.p_max}); resampling is not supported")
    n1, n2 = R1.norm(), R2.norm()
    if n1 == 0 or n2 == 0:
        raise ValueError("zero-norm field")
    return complex(np.vdot(R2.values, R1.values) / (n1 * n2))
