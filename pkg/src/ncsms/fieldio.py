"""Binary ``.mfld`` and JSON serialization of fields and maximal families."""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .lattice import (FREQUENCY, SPATIAL, GridSpec, MatrixField, SpectrumField,
                      make_grid)

MAGIC = b"MFLD1"
_HEADER = struct.Struct("<IIdIB")
FIELD_SCHEMA = "ncsms.field/1"
FAMILY_SCHEMA = "ncsms.family/1"


def _rep_of(field) -> int:
    return FREQUENCY if isinstance(field, SpectrumField) else SPATIAL


def _build(grid: GridSpec, values: np.ndarray, rep: int):
    cls = SpectrumField if rep == FREQUENCY else MatrixField
    return cls(grid, values)


def to_bytes(field) -> bytes:
    g = field.grid
    head = MAGIC + _HEADER.pack(g.n, g.N, g.L, field.d, _rep_of(field))
    return head + np.ascontiguousarray(field.values, dtype="<c16").tobytes()


def from_bytes(blob: bytes):
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError("not an .mfld stream (bad magic)")
    off = len(MAGIC)
    n, N, L, d, rep = _HEADER.unpack_from(blob, off)
    off += _HEADER.size
    if rep not in (SPATIAL, FREQUENCY):
        raise ValueError(f"unknown representation flag {rep}")
    g = make_grid(n, N, L)
    count = N**n * d * d
    if off + 16 * count != len(blob):
        raise ValueError("payload length does not match header")
    data = np.frombuffer(blob, dtype="<c16", count=count, offset=off)
    return _build(g, data.reshape(g.shape + (d, d)).astype(np.complex128), rep)


def write_mfld(path, field) -> None:
    Path(path).write_bytes(to_bytes(field))


def read_mfld(path):
    return from_bytes(Path(path).read_bytes())


def field_to_json(field) -> dict:
    v = field.values.reshape(-1)
    return {
        "schema": FIELD_SCHEMA,
        "grid": field.grid.to_dict(),
        "d": field.d,
        "representation": "frequency" if _rep_of(field) == FREQUENCY else "spatial",
        "re": v.real.tolist(),
        "im": v.imag.tolist(),
    }


def field_from_json(obj: dict):
    if obj.get("schema") != FIELD_SCHEMA:
        raise ValueError(f"unsupported field schema {obj.get('schema')!r}")
    gd = obj["grid"]
    g = make_grid(gd["n"], gd["N"], gd["L"])
    d = int(obj["d"])
    v = np.asarray(obj["re"], dtype=float) + 1j * np.asarray(obj["im"], dtype=float)
    rep = FREQUENCY if obj.get("representation") == "frequency" else SPATIAL
    return _build(g, v.reshape(g.shape + (d, d)), rep)


def family_to_json(family, field_paths=None) -> dict:
    """Serialize a MaximalFamily; members are inlined unless paths are given."""
    members = []
    for i, (t, f) in enumerate(zip(family.ts, family.fields)):
        if field_paths is not None:
            members.append({"t": float(t), "field": str(field_paths[i])})
        else:
            members.append({"t": float(t), "inline": field_to_json(f)})
    return {
        "schema": FAMILY_SCHEMA,
        "grid": family.grid.to_dict(),
        "d": family.d,
        "kind": family.kind,
        "members": members,
    }


def family_from_json(obj: dict, base_dir=None):
    from .ncspace import MaximalFamily

    if obj.get("schema") != FAMILY_SCHEMA:
        raise ValueError(f"unsupported family schema {obj.get('schema')!r}")
    base = Path(base_dir) if base_dir is not None else Path(".")
    ts, fields = [], []
    for m in obj["members"]:
        ts.append(float(m["t"]))
        if "inline" in m:
            fields.append(field_from_json(m["inline"]))
        else:
            p = Path(m["field"])
            fields.append(read_mfld(p if p.is_absolute() else base / p))
    fam = MaximalFamily(ts, fields, obj["kind"])
    gd = obj.get("grid")
    if gd is not None and fam.grid != make_grid(gd["n"], gd["N"], gd["L"]):
        raise ValueError("member grids disagree with the family grid")
    if "d" in obj and int(obj["d"]) != fam.d:
        raise ValueError("member matrix size disagrees with the family d")
    return fam


def load_family(path):
    p = Path(path)
    return family_from_json(json.loads(p.read_text()), p.parent)
