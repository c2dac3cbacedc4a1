"""Scenario configuration and the four reference parameter sets."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError
from .lindblad import HilbertSpec, build_hilbert
from .mapcore import MapParams, NoiseSpec
from .phasespace import UlamGrid

# k is quoted in rescaled momentum units p = hbar_eff n, i.e. it is K = k_n hbar_eff.
PRESETS = {
    "B1": {"k": 8.2, "gamma": 0.2},
    # 8 sigma tails would let one step reach |p| = 30.7 > p_max here
    "Cm1": {"k": 5.6, "gamma": 0.64, "noise_truncation": 6.0},
    "Dm1": {"k": 11.9, "gamma": 0.29},
    "attractor": {"k": 11.9, "gamma": 0.26},
}


@dataclass(frozen=True)
class ScenarioConfig:
    """All knobs of a run.

    ``noise_variance`` is ``<xi^2>`` in rescaled momentum units and
    defaults to ``hbar_eff``. ``M`` defaults to ``round(2 p_max / hbar_eff_pf)``.
    With ``match_quantum_grid`` the classical grid is replaced by the
    quantum one (``M = N``, ``p_max = N hbar_eff / 2``) so eigenvector fields
    can be overlapped.
    """

    name: str
    k: float
    gamma: float
    a: float = 0.5
    phi: float = float(np.pi / 2)
    hbar_eff: float = 0.15
    hbar_eff_pf: float | None = None
    p_max: float = 30.0
    M: int | None = None
    n_tr: int = 1000
    noise_variance: float | None = None
    noise_truncation: float = 8.0
    eig_count: int = 100
    eig_subspace: int | None = None
    eig_tol: float = 1e-8
    eig_max_restarts: int = 1000
    seed: int = 0
    output_dir: str | None = None
    chord_radius: float | None = None
    match_quantum_grid: bool = False
    overlap_depth: int = 5
    save_transfer_matrix: bool = False

    def __post_init__(self):
        if not self.name:
            raise ConfigurationError("name required")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.k < 0:
            raise ConfigurationError("k must be non-negative")
        if not (self.hbar_eff > 0 and self.p_max > 0):
            raise ConfigurationError("hbar_eff and p_max must be positive")
        if self.hbar_eff_pf is None:
            object.__setattr__(self, "hbar_eff_pf", self.hbar_eff)
        if not self.hbar_eff_pf > 0:
            raise ConfigurationError("hbar_eff_pf must be positive")
        expected = int(round(2 * self.p_max / self.hbar_eff_pf))
        if self.M is None:
            object.__setattr__(self, "M", expected)
        elif self.M != expected:
            raise ConfigurationError(
                f"M={self.M} is inconsistent with 2*p_max/hbar_eff_pf = {2 * self.p_max / self.hbar_eff_pf:g}")
        if self.noise_variance is None:
            object.__setattr__(self, "noise_variance", self.hbar_eff)
        if self.noise_variance < 0:
            raise ConfigurationError("noise_variance must be >= 0")
        if self.n_tr < 1 or self.eig_count < 1 or self.overlap_depth < 1:
            raise ConfigurationError("n_tr, eig_count and overlap_depth must be positive")
        if self.eig_subspace is not None and self.eig_subspace <= self.eig_count:
            raise ConfigurationError("eig_subspace must exceed eig_count")

    @classmethod
    def preset(cls, preset: str, **overrides) -> "ScenarioConfig":
        """Reference scenario ``preset`` with optional field overrides."""
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        values = {"name": preset, **PRESETS[preset]}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if ("hbar_eff_pf" in overrides or "p_max" in overrides) and "M" not in overrides:
            overrides["M"] = None
        return replace(self, **overrides)

    # derived objects -------------------------------------------------

    @property
    def params(self) -> MapParams:
        return MapParams.from_rescaled(self.k, self.gamma, self.hbar_eff, self.a, self.phi)

    def noise(self, thermal: bool = True) -> NoiseSpec:
        if not thermal:
            return NoiseSpec(0.0, self.noise_truncation)
        return NoiseSpec.from_p_variance(self.noise_variance, self.hbar_eff, self.noise_truncation)

    @property
    def hilbert(self) -> HilbertSpec:
        return build_hilbert(self.hbar_eff, self.p_max)

    @property
    def grid(self) -> UlamGrid:
        if self.match_quantum_grid:
            h = self.hilbert
            if not np.isclose(self.hbar_eff_pf, self.hbar_eff):
                raise ConfigurationError("matched grids need hbar_eff_pf == hbar_eff")
            return UlamGrid(h.N, h.p_max)
        return UlamGrid(self.M, self.p_max)

    @property
    def subspace(self) -> int:
        return self.eig_subspace or 3 * self.eig_count

    def to_dict(self) -> dict:
        return asdict(self)


CONFIG_KEYS = tuple(f.name for f in fields(ScenarioConfig))


def parse_config(path) -> ScenarioConfig:
    """Read a JSON or YAML scenario file; a ``preset`` key supplies defaults."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"config {path} must be a mapping")
    unknown = set(doc) - set(CONFIG_KEYS) - {"preset"}
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    preset = doc.pop("preset", None)
    if preset is not None:
        values = {"name": preset, **PRESETS.get(preset, {})}
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}")
        values.update(doc)
        doc = values
    if "name" not in doc:
        raise ConfigurationError("name required")
    missing = {"k", "gamma"} - set(doc)
    if missing:
        raise ConfigurationError(f"missing required keys: {sorted(missing)}")
    try:
        return ScenarioConfig(**doc)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc
