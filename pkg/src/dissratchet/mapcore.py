"""Classical dissipative ratchet map, with and without thermal noise.

The map acts on ``(x, n)`` with ``x`` the angle and ``n`` its conjugate
momentum::

    n' = gamma * n + k * [sin(x) + a * sin(2x + phi)] (+ xi)
    x' = x + hbar_eff * n'   (mod 2 pi)

In the rescaled momentum ``p = hbar_eff * n`` the kick strength becomes
``K = k * hbar_eff``, the only combination the classical dynamics sees.
"""
from __future__ import annotations

import os

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass


import numpy as np

from .errors import ConfigurationError, DomainError
from .phasespace import TWO_PI, PhaseField, UlamGrid

#: Points per noise substream in ensemble evolution. Fixed so results do
#: not depend on how work is scheduled.
ENSEMBLE_BLOCK = 4096


def wrap_angle(x):
    """Reduce angles into ``[0, 2*pi)``."""
    x = np.mod(x, TWO_PI)
    # np.mod rounds tiny negatives up to exactly 2*pi
    return np.where(x >= TWO_PI, 0.0, x)


@dataclass(frozen=True)
class MapParams:
    """Parameters of the kicked ratchet.

    ``k`` is the kick strength in ``n`` units; scenario tables usually quote
    the rescaled ``K = k * hbar_eff``, see :meth:`from_rescaled`.
    """

    k: float
    gamma: float
    a: float = 0.5
    phi: float = np.pi / 2
    hbar_eff: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.k < 0:
            raise ConfigurationError(f"kick strength must be non-negative, got {self.k}")
        if not self.hbar_eff > 0:
            raise ConfigurationError(f"hbar_eff must be positive, got {self.hbar_eff}")

    @classmethod
    def from_rescaled(cls, K, gamma, hbar_eff, a=0.5, phi=np.pi / 2):
        return cls(k=K / hbar_eff, gamma=gamma, a=a, phi=phi, hbar_eff=hbar_eff)

    @property
    def K(self) -> float:
        return self.k * self.hbar_eff

    def force(self, x):
        return np.sin(x) + self.a * np.sin(2.0 * x + self.phi)

    def max_force(self) -> float:
        """``max |sin x + a sin(2x + phi)|``, refined by Newton on the derivative."""
        x = np.linspace(0.0, TWO_PI, 4097)
        x0 = x[np.argmax(np.abs(self.force(x)))]
        for _ in range(30):
            d1 = np.cos(x0) + 2 * self.a * np.cos(2 * x0 + self.phi)
            d2 = -np.sin(x0) - 4 * self.a * np.sin(2 * x0 + self.phi)
            if d2 == 0:
                break
            x0 -= d1 / d2
        return float(max(abs(self.force(x0)), np.abs(self.force(x)).max()))


@dataclass(frozen=True)
class PhasePoint:
    """A phase-space point, or an ensemble when ``x`` and ``n`` are arrays."""

    x: object
    n: object
    hbar_eff: float

    def __post_init__(self):
        x = wrap_angle(np.asarray(self.x, dtype=float))
        n = np.asarray(self.n, dtype=float)
        if x.shape != n.shape:
            raise ValueError(f"x and n shapes differ: {x.shape} vs {n.shape}")
        object.__setattr__(self, "x", x if x.ndim else float(x))
        object.__setattr__(self, "n", n if n.ndim else float(n))

    @classmethod
    def from_p(cls, x, p, hbar_eff):
        return cls(x, np.asarray(p, dtype=float) / hbar_eff, hbar_eff)

    @property
    def p(self):
        return self.hbar_eff * np.asarray(self.n) if np.ndim(self.n) else self.hbar_eff * self.n

    def __len__(self):
        return int(np.size(self.x))


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian momentum noise ``xi`` added to ``n'``, truncated at ``truncation`` sigmas.

    ``variance`` is ``<xi^2>`` in ``n`` units; zero means the noiseless map.
    """

    variance: float = 0.0
    truncation: float = 8.0

    def __post_init__(self):
        if self.variance < 0:
            raise ConfigurationError(f"noise variance must be >= 0, got {self.variance}")
        if not self.truncation > 0:
            raise ConfigurationError("noise truncation must be positive")

    @classmethod
    def thermal(cls, hbar_eff, truncation=8.0):
        """Noise with ``<xi^2> = hbar_eff`` in rescaled momentum ``p`` units."""
        return cls.from_p_variance(hbar_eff, hbar_eff, truncation)

    @classmethod
    def from_p_variance(cls, p_variance, hbar_eff, truncation=8.0):
        return cls(p_variance / hbar_eff**2, truncation)

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.variance))

    def p_sigma(self, hbar_eff) -> float:
        return self.sigma * hbar_eff

    def sample(self, rng: np.random.Generator, size):
        """Draw truncated Gaussian deviates (rejection of the tails)."""
        if self.variance == 0:
            return np.zeros(size)
        z = rng.standard_normal(size)
        bad = np.abs(z) > self.truncation
        while np.any(bad):
            z[bad] = rng.standard_normal(int(bad.sum()))
            bad = np.abs(z) > self.truncation
        return self.sigma * z


def rescaled_step(x, p, params: MapParams, xi_p=None):
    """One map step in rescaled momentum; ``xi_p`` is noise already in ``p`` units.

    Works on arrays, returns ``(x', p')``. This is the vectorised kernel
    used by the transfer-operator builder.
    """
    pb = params.gamma * p + params.K * params.force(x)
    if xi_p is not None:
        pb = pb + xi_p
    return wrap_angle(x + pb), pb


def step(s: PhasePoint, params: MapParams) -> PhasePoint:
    nb = params.gamma * np.asarray(s.n) + params.k * params.force(np.asarray(s.x))
    return PhasePoint(np.asarray(s.x) + params.hbar_eff * nb, nb, params.hbar_eff)


def step_thermal(s: PhasePoint, params: MapParams, noise: NoiseSpec,
                 rng: np.random.Generator) -> PhasePoint:
    """Noisy step: ``xi`` is added to the updated momentum before the drift."""
    nb = params.gamma * np.asarray(s.n) + params.k * params.force(np.asarray(s.x))
    if noise.variance > 0:
        nb = nb + noise.sample(rng, np.shape(nb))
    return PhasePoint(np.asarray(s.x) + params.hbar_eff * nb, nb, params.hbar_eff)


def resolve_workers(workers: int | None = None) -> int:
    """Thread count: explicit value, else ``DISSRATCHET_THREADS``, else 1."""
    if workers is None:
        raw = os.environ.get("DISSRATCHET_THREADS", "1")
        try:
            workers = int(raw)
        except ValueError:
            raise ConfigurationError(f"DISSRATCHET_THREADS must be an integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigurationError("thread count must be positive")
    return workers


def _block_rng(seed, block):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _evolve_block(x, n, params, noise, steps, seed, block):
    rng = _block_rng(seed, block)
    g, k, h = params.gamma, params.k, params.hbar_eff
    for _ in range(steps):
        n = g * n + k * params.force(x)
        if noise.variance > 0:
            n = n + noise.sample(rng, n.shape)
        x = wrap_angle(x + h * n)
    return x, n


def evolve_ensemble(points: PhasePoint, params: MapParams, noise: NoiseSpec | None = None,
                    steps: int = 1, seed: int = 0, workers: int | None = None) -> PhasePoint:
    """Advance every point ``steps`` iterations.

    Noise for point ``i`` comes from substream ``i // ENSEMBLE_BLOCK`` of the
    master ``seed``; the result is independent of ``workers``.
    """
    if steps < 0:
        raise ConfigurationError("steps must be >= 0")
    noise = noise or NoiseSpec()
    x = np.atleast_1d(np.asarray(points.x, dtype=float))
    n = np.atleast_1d(np.asarray(points.n, dtype=float))
    if steps == 0:
        return points
    starts = range(0, x.size, ENSEMBLE_BLOCK)
    jobs = [(x[s:s + ENSEMBLE_BLOCK], n[s:s + ENSEMBLE_BLOCK], params, noise, steps, seed,
             s // ENSEMBLE_BLOCK) for s in starts]
    workers = resolve_workers(workers)
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda a: _evolve_block(*a), jobs))
    else:
        parts = [_evolve_block(*a) for a in jobs]
    xo = np.concatenate([q[0] for q in parts])
    no = np.concatenate([q[1] for q in parts])
    if np.ndim(points.x) == 0:
        xo, no = xo[0], no[0]
    return PhasePoint(xo, no, params.hbar_eff)


def ratchet_current(points: PhasePoint) -> float:
    """Ensemble mean of the rescaled momentum."""
    if len(points) == 0:
        raise ValueError("empty ensemble")
    return float(np.mean(points.p))


def attractor_histogram(params: MapParams, noise: NoiseSpec | None, grid: UlamGrid,
                        transient: int, samples: int, seed: int = 0,
                        record_steps: int = 1, workers: int | None = None) -> PhaseField:
    """Occupation histogram of the asymptotic ensemble.

    ``samples`` points start uniformly over the grid window, are evolved for
    ``transient`` steps and then binned on ``grid`` over ``record_steps``
    consecutive snapshots. Returns a normalised ``(M, M)`` field.
    """
    if transient <= 0 or samples <= 0 or record_steps <= 0:
        raise ConfigurationError("transient, samples and record_steps must be positive")
    noise = noise or NoiseSpec()
    rng = _block_rng(seed, 2**31)
    pts = PhasePoint.from_p(rng.uniform(0, TWO_PI, samples),
                            rng.uniform(-grid.p_max, grid.p_max, samples), params.hbar_eff)
    pts = evolve_ensemble(pts, params, noise, transient, seed=seed, workers=workers)
    counts = np.zeros(grid.dimension)
    for r in range(record_steps):
        if r:
            pts = evolve_ensemble(pts, params, noise, 1, seed=seed + r, workers=workers)
        i, j = grid.locate(pts.x, pts.p)
        inside = (j >= 0) & (j < grid.M)
        counts += np.bincount(grid.flat(i[inside], j[inside]), minlength=grid.dimension)
    total = counts.sum()
    if total == 0:
        raise DomainError("window too small")
    return PhaseField(grid.reshape(counts / total), kind="histogram", p_max=grid.p_max, real=True,
                      meta={"transient": transient, "samples": samples, "seed": seed})
