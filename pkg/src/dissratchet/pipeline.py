"""Stage orchestration: spectra, eigenvector fields, Wigner fields and reports."""
from __future__ import annotations

import hashlib
import json
import os
import platform
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import ScenarioResult, compare_spectra, equilibration_time, overlap_table
from .config import ScenarioConfig
from .errors import ConfigurationError, FieldFileError, LockError, MissingArtifactError
from .io import (fmt_float, jsonable, read_field, read_spectrum_csv, write_csv, write_field,
                 write_spectrum_csv)
from .krylov import LinearOperatorHandle, SpectralSet, leading_spectrum
from .lindblad import DensityMatrix, build_propagator
from .mapcore import attractor_histogram, evolve_ensemble, PhasePoint, ratchet_current, _block_rng
from .phasespace import TWO_PI
from .ulam import build_transfer_matrix
from .wigner import ChordCutoff, classical_field, fix_phase, wigner_field

STAGES = ("classical", "classical-thermal", "quantum", "wigner", "compare")
LOCK_NAME = ".lock"


@contextmanager
def locked(directory: Path):
    """Exclusive lock file for the lifetime of a run."""
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise LockError(f"output directory {directory} is locked ({lock} exists)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield
    finally:
        lock.unlink(missing_ok=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """State shared between the stages of one pipeline invocation."""

    def __init__(self, config: ScenarioConfig, out: Path, workers=None):
        self.config = config
        self.out = out
        self.workers = workers
        self.spectra: dict[str, SpectralSet] = {}
        self.fields: dict[str, list] = {}
        self.artifacts: list[Path] = []
        self.notes: list[str] = []

    def path(self, *parts) -> Path:
        return self.out.joinpath(*parts)

    def record(self, path: Path) -> Path:
        self.artifacts.append(path)
        return path

    def provenance(self, stage: str) -> dict:
        return {"stage": stage, "scenario": self.config.name, "seed": self.config.seed,
                "config": self.config.to_dict()}

    # helpers ---------------------------------------------------------

    def _eigs(self, op: LinearOperatorHandle) -> SpectralSet:
        c = self.config
        count = min(c.eig_count, op.dimension - 2)
        sub = min(c.subspace, op.dimension)
        return leading_spectrum(op, count=count, subspace_dim=sub, tol=c.eig_tol,
                                max_restarts=c.eig_max_restarts, seed=c.seed)

    def spectrum(self, key: str) -> SpectralSet | np.ndarray:
        """Eigenvalues for ``key`` from this run or from disk."""
        if key in self.spectra:
            return self.spectra[key]
        path = self.path(key, "spectrum.csv")
        if not path.exists():
            raise MissingArtifactError(f"missing artifact {path} (run stage {key!r} first)")
        values, residuals = read_spectrum_csv(path)
        return SpectralSet(values, np.empty((0, values.size)), residuals, values.size)

    def eigen_fields(self, key: str, prefix: str, depth: int):
        if key in self.fields:
            return self.fields[key][:depth]
        out = []
        for i in range(depth):
            path = self.path(key, f"{prefix}_{i:03d}.bin")
            if not path.exists():
                raise MissingArtifactError(f"missing artifact {path} (run stage {key!r} first)")
            out.append(read_field(path))
        return out

    # stages ----------------------------------------------------------

    def classical(self, thermal: bool):
        c = self.config
        key = "classical-thermal" if thermal else "classical"
        grid = c.grid
        S = build_transfer_matrix(grid, c.params, c.noise(thermal), n_tr=c.n_tr, seed=c.seed,
                                  workers=self.workers)
        if c.save_transfer_matrix:
            self.record(write_field(self.path(key, "transfer_matrix.bin"), S,
                                    extra=self.provenance(key)))
        spec = self._eigs(LinearOperatorHandle.from_matrix(S.matrix, label=key))
        self.spectra[key] = spec
        self.record(write_spectrum_csv(self.path(key, "spectrum.csv"), spec))
        fields = []
        for i in range(min(c.overlap_depth, len(spec))):
            lam, vec, _ = spec[i]
            f = classical_field(fix_phase(vec, lam, kind="vector"), grid, lam)
            f.meta.update(self.provenance(key), index=i)
            self.record(write_field(self.path(key, f"eigvec_{i:03d}.bin"), f, params=c.params))
            fields.append(f)
        self.fields[key] = fields

    def quantum(self):
        c = self.config
        h = c.hilbert
        prop = build_propagator(h, c.params)
        spec = self._eigs(prop.as_operator())
        self.spectra["quantum"] = spec
        self.record(write_spectrum_csv(self.path("quantum", "spectrum.csv"), spec))
        states = []
        for i in range(min(c.overlap_depth, len(spec))):
            lam, vec, _ = spec[i]
            rho = fix_phase(DensityMatrix(vec.reshape(h.N, h.N), "momentum", complex(lam)), lam)
            self.record(write_field(self.path("quantum", f"eigvec_{i:03d}.bin"), rho,
                                    params=c.params, extra=self.provenance("quantum") | {"index": i}))
            states.append(rho)
        self.fields["quantum"] = states

    def wigner(self):
        c = self.config
        h = c.hilbert
        cut = ChordCutoff(c.chord_radius) if c.chord_radius is not None else ChordCutoff.default(h.N)
        states = self.eigen_fields("quantum", "eigvec", c.overlap_depth)
        fields = []
        for i, rho in enumerate(states):
            f = wigner_field(rho, h, cut)
            f.meta.update(self.provenance("wigner"), index=i, eigenvalue=rho.eigenvalue,
                          chord_radius=cut.radius)
            self.record(write_field(self.path("wigner", f"wigner_{i:03d}.bin"), f, params=c.params))
            fields.append(f)
        self.fields["wigner"] = fields

    def compare(self):
        c = self.config
        cl = self.spectrum("classical-thermal")
        qm = self.spectrum("quantum")
        summary = [["operator", "lambda0_re", "lambda0_im", "lambda1_re", "lambda1_im",
                    "abs_lambda1", "gap", "t_lambda1"]]
        for key in ("classical", "classical-thermal", "quantum"):
            try:
                s = self.spectrum(key)
            except MissingArtifactError:
                continue
            r = ScenarioResult(c.name, key, s)
            l0, l1 = s.values[0], r.lambda1
            summary.append([key, fmt_float(l0.real), fmt_float(l0.imag), fmt_float(l1.real),
                            fmt_float(l1.imag), fmt_float(abs(l1)), fmt_float(r.gap), fmt_float(equilibration_time(l1))])
        self.record(write_csv(self.path("compare", "summary.csv"), summary))

        count = min(len(cl), len(qm))
        cmp = compare_spectra(cl, qm, count)
        rows = [["index", "classical_re", "classical_im", "quantum_re", "quantum_im", "distance"]]
        for i, a, b, d in cmp.rows():
            rows.append([str(i), fmt_float(a.real), fmt_float(a.imag), fmt_float(b.real), fmt_float(b.imag), fmt_float(d)])
        self.record(write_csv(self.path("compare", "comparison.csv"), rows))

        try:
            cf = self.eigen_fields("classical-thermal", "eigvec", c.overlap_depth)
            wf = self.eigen_fields("wigner", "wigner", c.overlap_depth)
        except MissingArtifactError as exc:
            self.notes.append(f"overlap table skipped: {exc}")
            return
        if not cf[0].same_grid(wf[0]):
            raise ConfigurationError(
                f"overlaps need matched grids: classical {cf[0].shape} p_max={cf[0].p_max} vs "
                f"Wigner {wf[0].shape} p_max={wf[0].p_max}; set match_quantum_grid")
        depth = min(len(cf), len(wf))
        cv = np.array([_as_complex(f.meta["eigenvalue"]) for f in cf[:depth]])
        qv = np.array([_as_complex(f.meta["eigenvalue"]) for f in wf[:depth]])
        table = overlap_table(cv, cf[:depth], qv, wf[:depth], depth)
        rows = [["index", "classical_re", "classical_im", "quantum_re", "quantum_im", "overlap"]]
        for r in table:
            a, b = r.classical_eigenvalue, r.quantum_eigenvalue
            rows.append([str(r.index), fmt_float(a.real), fmt_float(a.imag), fmt_float(b.real), fmt_float(b.imag),
                         fmt_float(r.overlap)])
        self.record(write_csv(self.path("compare", "overlaps.csv"), rows))


def _as_complex(v) -> complex:
    if isinstance(v, dict):
        return complex(v["re"], v["im"])
    return complex(v)


def _canonical(stages) -> list[str]:
    stages = list(dict.fromkeys(stages))
    unknown = set(stages) - set(STAGES)
    if unknown:
        raise ConfigurationError(f"unknown stages {sorted(unknown)}; choose from {list(STAGES)}")
    if not stages:
        raise ConfigurationError("no stages requested")
    return [s for s in STAGES if s in stages]


def _check_grids(config: ScenarioConfig, stages):
    if {"classical-thermal", "wigner"} <= set(stages) and not config.match_quantum_grid:
        g, h = config.grid, config.hilbert
        if g.M != h.N or not np.isclose(g.p_max, h.p_max):
            raise ConfigurationError(
                f"classical grid M={g.M}, p_max={g.p_max} differs from the quantum grid "
                f"N={h.N}, p_max={h.p_max}; set match_quantum_grid to compare eigenvectors")


def run_pipeline(config: ScenarioConfig, stages, output_dir=None, workers=None) -> Path:
    """Run ``stages`` in canonical order and write artifacts plus ``manifest.json``."""
    stages = _canonical(stages)
    _check_grids(config, stages)
    out = Path(output_dir or config.output_dir or Path("runs") / config.name)
    run = Run(config, out, workers)
    with locked(out):
        for stage in stages:
            if stage == "classical":
                run.classical(thermal=False)
            elif stage == "classical-thermal":
                run.classical(thermal=True)
            elif stage == "quantum":
                run.quantum()
            elif stage == "wigner":
                run.wigner()
            else:
                run.compare()
        write_manifest(run, stages)
    return out


def versions() -> dict:
    return {"dissratchet": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(run: Run, stages) -> Path:
    manifest = {
        "scenario": run.config.name,
        "stages": list(stages),
        "config": run.config.to_dict(),
        "params": asdict(run.config.params),
        "seed": run.config.seed,
        "versions": versions(),
        "notes": run.notes,
        "artifacts": [{"path": str(p.relative_to(run.out)), "sha256": _sha256(p)}
                      for p in run.artifacts],
    }
    path = run.out / "manifest.json"
    try:
        path.write_text(json.dumps(jsonable(manifest), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise FieldFileError(f"cannot write {path}: {exc}") from exc
    return path


def simulate(config: ScenarioConfig, points: int, steps: int, transient: int,
             output_dir=None, workers=None, thermal: bool = True) -> Path:
    """Direct ensemble simulation: ratchet current and asymptotic histogram."""
    c = config
    out = Path(output_dir or c.output_dir or Path("runs") / c.name)
    noise = c.noise(thermal)
    with locked(out):
        rng = _block_rng(c.seed, 2**31 + 1)
        pts = PhasePoint.from_p(rng.uniform(0, TWO_PI, points), np.zeros(points), c.hbar_eff)
        rows = [["step", "mean_p"]]
        for t in range(1, steps + 1):
            pts = evolve_ensemble(pts, c.params, noise, 1, seed=c.seed + t, workers=workers)
            rows.append([str(t), fmt_float(ratchet_current(pts))])
        artifacts = [write_csv(out / "simulate" / "current.csv", rows)]
        hist = attractor_histogram(c.params, noise, c.grid, transient, points, seed=c.seed,
                                   workers=workers)
        hist.meta.update(config=c.to_dict(), thermal=thermal)
        artifacts.append(write_field(out / "simulate" / "histogram.bin", hist, params=c.params))
        run = Run(c, out)
        run.artifacts = artifacts
        run.notes.append(f"simulate: points={points} steps={steps} transient={transient} thermal={thermal}")
        write_manifest(run, ["simulate"])
    return out
