"""File formats: binary field bundles, checkpoints, energy CSV, summary JSON, CSV slices.

Binary field bundle
    One header line of JSON (``format``, ``version``, ``layout``, ``shape``,
    ``extents``, ``fields`` as ``[name, loc]`` pairs, ``meta``) terminated by
    ``\\n``, followed by the raw components: for each field in header order,
    components x, y, z, each a little-endian float64 array in C order with the
    shape of that component on the grid.

energies.csv
    Header row with :data:`maxlab.diagnostics.CSV_COLUMNS`, then one row per
    sample, every value printed with 17 significant digits (exact round trip).

summary.json
    See :data:`SUMMARY_KEYS`; ``schema_version`` guards incompatible changes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .diagnostics import CSV_COLUMNS, EnergyRecord
from .grid import BoxGrid, VectorField, to_nodes

FIELD_FORMAT = "maxlab-fields"
FIELD_VERSION = 1
SUMMARY_SCHEMA_VERSION = 1
SUMMARY_KEYS = ("schema_version", "scenario", "grid", "amplitude", "omega", "M", "r2",
                "constants", "status")
CONSTANT_KEYS = ("C1", "C2", "c2", "c3", "c4", "c5", "c6", "Cbar")
_LE = np.dtype("<f8")


class FormatError(ValueError):
    pass


# -- binary fields ----------------------------------------------------------------

def write_fields(path, grid: BoxGrid, fields: dict, meta=None):
    """Write named :class:`VectorField` objects (or node scalars) to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, f in fields.items():
        loc = f.loc if isinstance(f, VectorField) else "scalar"
        entries.append([name, loc])
    header = {
        "format": FIELD_FORMAT, "version": FIELD_VERSION, "layout": grid.layout,
        "shape": list(grid.shape), "extents": list(grid.extents), "fields": entries,
        "meta": meta or {},
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        for f in fields.values():
            comps = f.comps if isinstance(f, VectorField) else (np.asarray(f),)
            for c in comps:
                fh.write(np.ascontiguousarray(c, dtype=_LE).tobytes(order="C"))
    return path


def read_fields(path):
    """Return ``(grid, fields, meta)`` from a bundle written by :func:`write_fields`."""
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: unreadable header line") from exc
        if header.get("format") != FIELD_FORMAT:
            raise FormatError(f"{path}: not a {FIELD_FORMAT} file")
        if header.get("version") != FIELD_VERSION:
            raise FormatError(f"{path}: unsupported version {header.get('version')}")
        payload = fh.read()
    grid = BoxGrid(tuple(header["extents"]), tuple(header["shape"]), header["layout"])
    data = np.frombuffer(payload, dtype=_LE)
    pos = 0
    fields = {}
    for name, loc in header["fields"]:
        if loc == "scalar":
            shp = grid.comp_shape("node")
            n = int(np.prod(shp))
            fields[name] = data[pos:pos + n].reshape(shp).astype(float)
            pos += n
            continue
        comps = []
        for c in range(3):
            shp = grid.comp_shape(loc, c)
            n = int(np.prod(shp))
            if pos + n > data.size:
                raise FormatError(f"{path}: truncated payload")
            comps.append(data[pos:pos + n].reshape(shp).astype(float))
            pos += n
        fields[name] = VectorField(comps, loc)
    if pos != data.size:
        raise FormatError(f"{path}: {data.size - pos} trailing values")
    return grid, fields, header["meta"]


def write_checkpoint(path, grid, state, meta=None):
    meta = dict(meta or {})
    meta["t"] = float(state.t).hex()
    return write_fields(path, grid, {"E": state.E, "H": state.H, "D": state.D, "B": state.B}, meta)


def read_checkpoint(path):
    """Return ``(grid, FieldState, meta)``; the time is stored exactly as a hex float."""
    from .solver import FieldState
    grid, f, meta = read_fields(path)
    t = float.fromhex(meta["t"])
    return grid, FieldState(t, f["E"], f["H"], f["D"], f["B"]), meta


def write_initial_data(path, grid, data):
    fields = {"E0": data.E0, "H0": data.H0}
    for k in ("E1", "H1", "E2", "H2"):
        if getattr(data, k) is not None:
            fields[k] = getattr(data, k)
    meta = {"style": data.style, "seed": int(data.seed), "r": float(data.r).hex()}
    return write_fields(path, grid, fields, meta)


def read_initial_data(path):
    from .initial_data import InitialData
    grid, f, meta = read_fields(path)
    data = InitialData(f["E0"], f["H0"], f.get("E1"), f.get("H1"), f.get("E2"), f.get("H2"),
                       r=float.fromhex(meta["r"]), style=meta["style"], seed=meta["seed"])
    return grid, data


# -- CSV ----------------------------------------------------------------------------

def _fmt(v):
    return format(float(v), ".17g")


def write_energies(path, record: EnergyRecord):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(CSV_COLUMNS)]
    for row in record.table():
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def read_energies(path):
    text = Path(path).read_text().splitlines()
    if not text or tuple(text[0].split(",")) != CSV_COLUMNS:
        raise FormatError(f"{path}: header does not match the energies schema")
    rows = [[float(v) for v in line.split(",")] for line in text[1:] if line.strip()]
    if not rows:
        return EnergyRecord()
    return EnergyRecord.from_table(np.array(rows))


def write_slice(path, grid, u: VectorField, axis=2, index=None):
    """CSV of one node-plane of ``u`` (interpolated to nodes): two coordinates and three components."""
    nodes = to_nodes(grid, u) if u.loc != "node" else u
    n = grid.shape[axis]
    index = n // 2 if index is None else int(index)
    pts = grid.points("node")
    P = np.take(pts, index, axis=axis).reshape(-1, 3)
    V = np.stack([np.take(c, index, axis=axis) for c in nodes.comps], -1).reshape(-1, 3)
    keep = [a for a in range(3) if a != axis]
    names = ["xyz"[a] for a in keep] + ["u_x", "u_y", "u_z"]
    lines = [",".join(names)]
    for p, v in zip(P[:, keep], V):
        lines.append(",".join(_fmt(x) for x in (*p, *v)))
    Path(path).write_text("\n".join(lines) + "\n")
    return path


# -- summary JSON -------------------------------------------------------------------

def _clean(v):
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def validate_summary(obj):
    missing = [k for k in SUMMARY_KEYS if k not in obj]
    if missing:
        raise FormatError(f"summary is missing {missing}")
    if obj["schema_version"] != SUMMARY_SCHEMA_VERSION:
        raise FormatError(f"summary schema version {obj['schema_version']} is not supported")
    missing = [k for k in CONSTANT_KEYS if k not in obj["constants"]]
    if missing:
        raise FormatError(f"summary constants missing {missing}")
    return obj


def write_summary(path, summary: dict):
    """Write ``summary.json``; non-finite floats are written as JSON ``Infinity``/``NaN``."""
    obj = {"schema_version": SUMMARY_SCHEMA_VERSION, **_clean(summary)}
    validate_summary(obj)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def read_summary(path):
    return validate_summary(json.loads(Path(path).read_text()))


