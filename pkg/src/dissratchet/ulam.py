"""Ulam (cell-to-cell Monte Carlo) approximation of the Perron-Frobenius operator."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DomainError
from .mapcore import MapParams, NoiseSpec, rescaled_step, resolve_workers
from .phasespace import UlamGrid

#: Source cells per random substream; part of the reproducibility contract.
CELL_BLOCK = 512


def build_grid(M: int, p_max: float) -> UlamGrid:
    return UlamGrid(M, p_max)


@dataclass
class TransferMatrix:
    """Column-stochastic ``M^2 x M^2`` Ulam matrix, ``S[i, j] = n_ij / n_tr``."""

    matrix: sp.csc_matrix
    grid: UlamGrid
    params: MapParams
    noise: NoiseSpec
    n_tr: int
    seed: int
    meta: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def counts(self) -> sp.csc_matrix:
        """Integer transition counts ``n_ij``."""
        c = self.matrix.copy()
        c.data = np.rint(c.data * self.n_tr)
        return c.astype(np.int64)

    def __matmul__(self, v):
        return apply(self, v)


def window_bound(grid: UlamGrid, params: MapParams, noise: NoiseSpec) -> float:
    """Largest |p'| reachable in one step from inside the window."""
    tail = noise.truncation * noise.p_sigma(params.hbar_eff) if noise.variance > 0 else 0.0
    return params.gamma * grid.p_max + params.K * params.max_force() + tail


def _build_block(block, grid, params, noise, n_tr, seed):
    M = grid.M
    first = block * CELL_BLOCK
    cells = np.arange(first, min(first + CELL_BLOCK, grid.dimension), dtype=np.int64)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))
    size = cells.size * n_tr
    i, j = grid.unflat(np.repeat(cells, n_tr))
    x = (i + rng.random(size)) * grid.dx
    p = -grid.p_max + (j + rng.random(size)) * grid.dp
    xi = noise.sample(rng, size) * params.hbar_eff if noise.variance > 0 else None
    xb, pb = rescaled_step(x, p, params, xi)
    ti, tj = grid.locate(xb, pb)
    if np.any((tj < 0) | (tj >= M)):
        raise DomainError("domain not closed; increase p_max")
    # samples of one source cell are contiguous, so sorting (local, target)
    # keys groups each column together
    key = (np.repeat(cells - first, n_tr) * grid.dimension) + grid.flat(ti, tj)
    uniq, cnt = np.unique(key, return_counts=True)
    return first + uniq // grid.dimension, uniq % grid.dimension, cnt


def build_transfer_matrix(grid: UlamGrid, params: MapParams, noise: NoiseSpec | None = None,
                          n_tr: int = 1000, seed: int = 0, workers: int | None = None) -> TransferMatrix:
    """Propagate ``n_tr`` uniform samples from every cell one map step and count arrivals.

    Raises
    ------
    DomainError
        If the window is not provably closed under one step, or a sample
        leaves it anyway. Counts are never renormalised.
    """
    noise = noise or NoiseSpec()
    if n_tr < 1:
        raise ConfigurationError("n_tr must be >= 1")
    if window_bound(grid, params, noise) > grid.p_max:
        raise DomainError(
            f"domain not closed; increase p_max (one step can reach |p| = "
            f"{window_bound(grid, params, noise):.4g} > {grid.p_max:.4g})")
    workers = resolve_workers(workers)
    n_blocks = -(-grid.dimension // CELL_BLOCK)
    task = lambda b: _build_block(b, grid, params, noise, n_tr, seed)  # noqa: E731
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(task, range(n_blocks)))
    else:
        parts = [task(b) for b in range(n_blocks)]
    cols = np.concatenate([q[0] for q in parts])
    rows = np.concatenate([q[1] for q in parts])
    cnt = np.concatenate([q[2] for q in parts])
    del parts
    # keys are sorted by (column, row) already: assemble CSC directly
    indptr = np.zeros(grid.dimension + 1, dtype=np.int64)
    np.cumsum(np.bincount(cols, minlength=grid.dimension), out=indptr[1:])
    S = sp.csc_matrix((cnt / n_tr, rows.astype(np.int32), indptr), shape=(grid.dimension,) * 2)
    return TransferMatrix(S, grid, params, noise, n_tr, seed)


def apply(S: TransferMatrix, v) -> np.ndarray:
    """``S @ v``; mass of a non-negative density is conserved."""
    v = np.asarray(v)
    if v.shape != (S.dimension,):
        raise ValueError(f"dimension mismatch: operator {S.dimension}, vector {v.shape}")
    return S.matrix @ v
