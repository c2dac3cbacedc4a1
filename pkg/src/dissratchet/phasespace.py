"""Phase-space grids and fields shared by the classical and quantum sides.

Fields are stored with rows indexing momentum (ascending) and columns
indexing position, on the cylinder window ``x in [0, 2*pi)``,
``p in [-p_max, p_max]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class UlamGrid:
    """Uniform ``M x M`` cell partition of the phase-space window.

    Cell ``(i, j)`` covers ``x in [i*dx, (i+1)*dx)`` and
    ``p in [-p_max + j*dp, -p_max + (j+1)*dp)``; its flat index is ``j*M + i``.
    """

    M: int
    p_max: float

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 2:
            raise ConfigurationError(f"grid needs M >= 2 cells per axis, got {self.M}")
        if not self.p_max > 0:
            raise ConfigurationError(f"p_max must be positive, got {self.p_max}")
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "p_max", float(self.p_max))

    @property
    def dx(self) -> float:
        return TWO_PI / self.M

    @property
    def dp(self) -> float:
        return 2.0 * self.p_max / self.M

    @property
    def hbar_pf(self) -> float:
        """Momentum cell width, the effective Planck constant of the grid."""
        return self.dp

    @property
    def dimension(self) -> int:
        return self.M * self.M

    def flat(self, i, j):
        return np.asarray(j) * self.M + np.asarray(i)

    def unflat(self, index):
        index = np.asarray(index)
        return index % self.M, index // self.M

    def locate(self, x, p):
        """Return cell indices ``(i, j)``; ``j`` is -1 or M outside the window."""
        i = np.clip(np.floor(np.asarray(x) / self.dx).astype(np.int64), 0, self.M - 1)
        p = np.asarray(p)
        j = np.floor((p + self.p_max) / self.dp).astype(np.int64)
        # p == p_max exactly belongs to the top cell
        j = np.where(p == self.p_max, self.M - 1, j)
        return i, np.clip(j, -1, self.M)

    def cell_centers(self):
        x = (np.arange(self.M) + 0.5) * self.dx
        p = -self.p_max + (np.arange(self.M) + 0.5) * self.dp
        return x, p

    def reshape(self, vector) -> np.ndarray:
        """View a flat length-M^2 vector as a (momentum, position) array."""
        vector = np.asarray(vector)
        if vector.shape != (self.dimension,):
            raise ValueError(f"expected vector of length {self.dimension}, got {vector.shape}")
        return vector.reshape(self.M, self.M)


@dataclass
class PhaseField:
    """Complex field over the phase-space window.

    Parameters
    ----------
    values : ndarray, shape (n_p, n_x)
        Rows index momentum, columns index position.
    kind : str
        Provenance tag: ``"classical"``, ``"wigner"``, ``"weyl"`` (raw
        redundant symbol), or ``"histogram"``.
    p_max : float
        Half-width of the momentum window.
    real : bool
        Whether the field is declared real (imaginary part negligible).
    meta : dict
        Free-form metadata (eigenvalue, scenario, ...).
    """

    values: np.ndarray
    kind: str
    p_max: float
    real: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 2:
            raise ValueError("PhaseField values must be two-dimensional")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("PhaseField contains non-finite values")
        if self.real and np.iscomplexobj(self.values):
            scale = np.abs(self.values.real).max(initial=0.0)
            if np.abs(self.values.imag).max(initial=0.0) > 1e-8 * max(scale, 1e-300):
                raise ValueError("field tagged real has a significant imaginary part")

    @property
    def shape(self):
        return self.values.shape

    def same_grid(self, other: "PhaseField") -> bool:
        return self.shape == other.shape and np.isclose(self.p_max, other.p_max, rtol=1e-12, atol=0)

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.values, self.values).real))
