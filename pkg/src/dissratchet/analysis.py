"""Observables derived from leading spectra: gaps, decay times, pairings, overlap tables."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError
from .krylov import SpectralSet, spectral_order
from .phasespace import PhaseField
from .wigner import overlap

#: Eigenvalues with ``|lambda| >= 1 - PERIPHERAL_TOL`` besides the first one are
#: treated as part of the non-decaying (cyclic) sector. Ulam discretization
#: leaks a little mass off a periodic attractor, so its ``-1`` shows up as e.g.
#: ``-0.99999``; 1e-4 corresponds to an equilibration time above 46000 periods.
PERIPHERAL_TOL = 1e-4


def equilibration_time(lam1: complex, threshold: float = 0.01) -> float:
    """Steps ``t`` with ``|lam1|**t = threshold``."""
    mod = abs(lam1)
    if not 0 < threshold < 1:
        raise ConfigurationError("threshold must lie in (0, 1)")
    if mod >= 1:
        raise ValueError("no decay: |lambda_1| >= 1")
    if mod == 0:
        raise ValueError("|lambda_1| = 0 decays in a single step")
    return float(np.log(threshold) / np.log(mod))


def subdominant_index(values, peripheral_tol: float = PERIPHERAL_TOL) -> int:
    """Index of the slowest decaying eigenvalue.

    ``values`` must be in spectral order. Unit-modulus eigenvalues after the
    first (e.g. ``-1`` for a period-2 attractor) do not decay and are skipped.
    """
    values = np.asarray(values)
    for i in range(1, values.size):
        if abs(values[i]) < 1 - peripheral_tol:
            return i
    raise ValueError("no decaying eigenvalue among the computed ones")


@dataclass
class ScenarioResult:
    label: str
    operator: str                      # "PF", "PF_thermal" or "QM"
    spectrum: SpectralSet
    overlaps: list | None = None
    peripheral_tol: float = PERIPHERAL_TOL

    @property
    def lambda1(self) -> complex:
        return complex(self.spectrum.values[subdominant_index(self.spectrum.values, self.peripheral_tol)])

    @property
    def peripheral(self) -> np.ndarray:
        """Unit-modulus eigenvalues besides the leading one."""
        v = self.spectrum.values[1:]
        return v[np.abs(v) >= 1 - self.peripheral_tol]

    @property
    def gap(self) -> float:
        return 1.0 - abs(self.lambda1)

    @property
    def t_lambda1(self) -> float:
        return equilibration_time(self.lambda1)


@dataclass
class SpectrumComparison:
    classical: np.ndarray
    quantum: np.ndarray
    classical_index: np.ndarray
    quantum_index: np.ndarray
    distances: np.ndarray = field(init=False)

    def __post_init__(self):
        self.distances = np.abs(self.classical - self.quantum)

    @property
    def mean_distance(self) -> float:
        return float(self.distances.mean())

    @property
    def max_distance(self) -> float:
        return float(self.distances.max())

    def rows(self):
        for i in range(self.distances.size):
            yield i, self.classical[i], self.quantum[i], self.distances[i]


def pair_spectra(classical, quantum, count: int, rule: str = "modulus"):
    """Index pairs ``(i_cl, i_qm)`` of corresponding eigenvalues.

    ``rule="modulus"`` pairs entries by rank in spectral order (conjugate
    pairs are listed with Im > 0 first on both sides, so ``lambda`` meets
    ``lambda`` rather than its conjugate). ``rule="nearest"`` solves the
    assignment problem minimising the total ``|lambda_cl - lambda_qm|`` among
    the leading ``count`` entries, keeping classical rank order.
    """
    classical = np.asarray(classical)
    quantum = np.asarray(quantum)
    if classical.size < count or quantum.size < count:
        raise ValueError(f"need at least {count} eigenvalues on both sides "
                         f"(have {classical.size} and {quantum.size})")
    ic = spectral_order(classical)[:count]
    iq = spectral_order(quantum)[:count]
    if rule == "modulus":
        return ic, iq
    if rule == "nearest":
        cost = np.abs(classical[ic][:, None] - quantum[iq][None, :])
        r, c = linear_sum_assignment(cost)
        return ic[r], iq[c]
    raise ValueError(f"unknown pairing rule {rule!r}")


def compare_spectra(classical: SpectralSet, quantum: SpectralSet, count: int,
                    rule: str = "modulus") -> SpectrumComparison:
    """Pair the leading ``count`` eigenvalues and report their distances."""
    ic, iq = pair_spectra(classical.values, quantum.values, count, rule)
    return SpectrumComparison(classical.values[ic], quantum.values[iq], ic, iq)


@dataclass
class OverlapRow:
    index: int
    classical_eigenvalue: complex
    quantum_eigenvalue: complex
    overlap: float


def overlap_table(classical_values, classical_fields: list[PhaseField],
                  quantum_values, quantum_fields: list[PhaseField], depth: int = 5,
                  rule: str = "modulus") -> list[OverlapRow]:
    """``|O|`` between corresponding classical eigenvectors and quantum Wigner fields."""
    classical_values = np.asarray(classical_values)
    quantum_values = np.asarray(quantum_values)
    if len(classical_fields) != classical_values.size or len(quantum_fields) != quantum_values.size:
        raise ValueError("one field per eigenvalue is required")
    if depth > min(classical_values.size, quantum_values.size):
        raise ValueError("depth exceeds the available eigenvectors")
    ic, iq = pair_spectra(classical_values, quantum_values, depth, rule)
    rows = []
    for row, (a, b) in enumerate(zip(ic, iq)):
        fa, fb = classical_fields[a], quantum_fields[b]
        if not fa.same_grid(fb):
            raise ValueError(f"grid mismatch between classical {fa.shape} and quantum {fb.shape} fields")
        rows.append(OverlapRow(row, complex(classical_values[a]), complex(quantum_values[b]),
                               abs(overlap(fa, fb))))
    return rows
