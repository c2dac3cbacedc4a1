"""Field files (JSON sidecar + raw little-endian payload) and CSV reports."""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import ChecksumError, FieldFileError, TruncatedPayloadError, UnknownKindError
from .lindblad import DensityMatrix
from .mapcore import MapParams, NoiseSpec
from .phasespace import TWO_PI, PhaseField, UlamGrid
from .ulam import TransferMatrix

FORMAT = "dissratchet-field"
VERSION = 1
KINDS = ("phase_field", "transfer_matrix", "density_matrix")
_DTYPES = {"float64": "<f8", "complex128": "<c16", "int64": "<i8"}


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def jsonable(obj):
    """Recursively convert numpy scalars and complex numbers for JSON."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return {"re": float(obj.real), "im": float(obj.imag)}
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    return obj


def _complex(v):
    if v is None:
        return None
    if isinstance(v, dict):
        return complex(v["re"], v["im"])
    return complex(v)


def _pack(obj):
    """Return ``(kind, arrays, header)`` for a supported object."""
    if isinstance(obj, PhaseField):
        dtype = "float64" if not np.iscomplexobj(obj.values) else "complex128"
        arrays = [("values", np.ascontiguousarray(obj.values, dtype=_DTYPES[dtype]))]
        header = {
            "dims": list(obj.shape),
            "window": {"x": [0.0, TWO_PI], "p": [-obj.p_max, obj.p_max]},
            "field_kind": obj.kind,
            "real": obj.real,
            "meta": obj.meta,
        }
        return "phase_field", arrays, header
    if isinstance(obj, TransferMatrix):
        m = obj.matrix.tocsc()
        m.sort_indices()
        arrays = [
            ("indptr", np.ascontiguousarray(m.indptr, dtype="<i8")),
            ("indices", np.ascontiguousarray(m.indices, dtype="<i8")),
            ("data", np.ascontiguousarray(m.data, dtype="<f8")),
        ]
        header = {
            "dims": [obj.dimension, obj.dimension],
            "window": {"x": [0.0, TWO_PI], "p": [-obj.grid.p_max, obj.grid.p_max]},
            "grid": {"M": obj.grid.M, "p_max": obj.grid.p_max},
            "params": asdict(obj.params),
            "noise": asdict(obj.noise),
            "n_tr": obj.n_tr,
            "seed": obj.seed,
            "meta": obj.meta,
        }
        return "transfer_matrix", arrays, header
    if isinstance(obj, DensityMatrix):
        arrays = [("data", np.ascontiguousarray(obj.data, dtype="<c16"))]
        header = {
            "dims": [obj.N, obj.N],
            "basis": obj.basis,
            "eigenvalue": obj.eigenvalue,
            "meta": getattr(obj, "meta", {}),
        }
        return "density_matrix", arrays, header
    raise UnknownKindError(f"cannot serialize object of type {type(obj).__name__}")


def write_field(path, obj, params: MapParams | None = None, extra: dict | None = None) -> Path:
    """Write ``obj`` to ``path`` (raw payload) and ``path.json`` (metadata).

    Returns the payload path. ``params`` and ``extra`` are recorded in the
    sidecar so each file carries what is needed to regenerate it.
    """
    path = Path(path)
    kind, arrays, header = _pack(obj)
    layout, chunks, offset = [], [], 0
    for name, arr in arrays:
        dtype = next(k for k, v in _DTYPES.items() if np.dtype(v) == arr.dtype)
        raw = arr.tobytes(order="C")
        layout.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                       "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    if params is None:
        params = getattr(obj, "params", None)
    meta = {
        "format": FORMAT,
        "version": VERSION,
        "kind": kind,
        "endianness": "little",
        "element_type": layout[-1]["dtype"],
        "layout": "row-major, momentum index slowest",
        "arrays": layout,
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
        "params": asdict(params) if params is not None else None,
        **header,
    }
    if extra:
        meta["extra"] = extra
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
        sidecar_path(path).write_text(json.dumps(jsonable(meta), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise FieldFileError(f"cannot write {path}: {exc}") from exc
    return path


def read_metadata(path) -> dict:
    side = sidecar_path(path)
    try:
        meta = json.loads(side.read_text())
    except OSError as exc:
        raise FieldFileError(f"cannot read metadata {side}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FieldFileError(f"malformed metadata {side}: {exc}") from exc
    if meta.get("format") != FORMAT:
        raise FieldFileError(f"{side} is not a {FORMAT} sidecar")
    if meta.get("kind") not in KINDS:
        raise UnknownKindError(f"unknown field kind {meta.get('kind')!r} in {side}")
    if meta.get("endianness") != "little":
        raise FieldFileError(f"unsupported endianness {meta.get('endianness')!r}")
    return meta


def read_field(path):
    """Read a field file written by :func:`write_field`, verifying the checksum."""
    path = Path(path)
    meta = read_metadata(path)
    try:
        payload = path.read_bytes()
    except OSError as exc:
        raise FieldFileError(f"cannot read payload {path}: {exc}") from exc
    if len(payload) < meta["payload_bytes"]:
        raise TruncatedPayloadError(
            f"{path}: payload has {len(payload)} bytes, metadata declares {meta['payload_bytes']}")
    if len(payload) > meta["payload_bytes"]:
        raise FieldFileError(f"{path}: payload longer than declared")
    if hashlib.sha256(payload).hexdigest() != meta["sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    arrays = {}
    for a in meta["arrays"]:
        if a["dtype"] not in _DTYPES:
            raise FieldFileError(f"unsupported element type {a['dtype']!r}")
        raw = payload[a["offset"]:a["offset"] + a["nbytes"]]
        arrays[a["name"]] = np.frombuffer(raw, dtype=_DTYPES[a["dtype"]]).reshape(a["shape"]).copy()
    kind = meta["kind"]
    if kind == "phase_field":
        w = meta["window"]["p"][1]
        return PhaseField(arrays["values"], meta["field_kind"], w, real=meta["real"], meta=meta.get("meta", {}))
    if kind == "density_matrix":
        return DensityMatrix(arrays["data"], meta["basis"], _complex(meta.get("eigenvalue")))
    g = meta["grid"]
    grid = UlamGrid(g["M"], g["p_max"])
    n = grid.dimension
    mat = sp.csc_matrix((arrays["data"], arrays["indices"], arrays["indptr"]), shape=(n, n))
    return TransferMatrix(mat, grid, MapParams(**meta["params"]), NoiseSpec(**meta["noise"]),
                          meta["n_tr"], meta["seed"], meta.get("meta", {}))


# CSV reports -------------------------------------------------------------

def fmt_float(x: float) -> str:
    return repr(float(x))


def write_spectrum_csv(path, spectrum) -> Path:
    """One row per eigenvalue in SpectralSet order."""
    path = Path(path)
    rows = [["index", "re", "im", "abs", "residual"]]
    res = spectrum.residuals if spectrum.residuals is not None else [np.nan] * len(spectrum)
    for i, (lam, r) in enumerate(zip(spectrum.values, res)):
        rows.append([str(i), fmt_float(lam.real), fmt_float(lam.imag), fmt_float(abs(lam)), fmt_float(r)])
    return write_csv(path, rows)


def read_spectrum_csv(path):
    """Return ``(values, residuals)`` arrays."""
    rows = read_csv(path)
    if not rows or rows[0] != ["index", "re", "im", "abs", "residual"]:
        raise FieldFileError(f"{path} is not a spectrum CSV")
    body = rows[1:]
    values = np.array([complex(float(r[1]), float(r[2])) for r in body])
    residuals = np.array([float(r[4]) for r in body])
    return values, residuals


def write_csv(path, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    except OSError as exc:
        raise FieldFileError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    try:
        with open(path, newline="") as fh:
            return list(csv.reader(fh))
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc}") from exc
