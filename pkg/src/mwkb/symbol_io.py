"""File formats for symbol grids, sheet tables and reports.

A grid file is a self-describing little-endian container::

    b"MWKB"  u16 version  u16 n  u32 header_length
    header   UTF-8 JSON (sorted keys): shape, t, hbar, kind, scenario_hash,
             has_status, meta
    axes     float64, concatenated in axis order
    values   complex128 as interleaved (re, im) float64 pairs, C order
    status   int8 per point (only when has_status)

Everything that is written goes through :func:`to_jsonable` so that two runs
on identical input produce identical bytes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .symbol_grid import SymbolGrid

__all__ = [
    "MAGIC",
    "VERSION",
    "to_jsonable",
    "dumps_json",
    "write_json",
    "grid_to_bytes",
    "grid_from_bytes",
    "write_grid",
    "read_grid",
    "write_grid_csv",
]

MAGIC = b"MWKB"
VERSION = 1
_PREFIX = struct.Struct("<4sHHI")


def to_jsonable(obj):
    """Recursively convert ``obj`` into plain JSON types.

    Numpy scalars and arrays become Python numbers and lists, complex
    numbers become ``[re, im]``, non-finite floats become strings, and
    values with no JSON form (objects, callables) are dropped from dicts.
    """
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (complex, np.complexfloating)):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()] if obj.dtype.kind == "c" else to_jsonable(obj.tolist())
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            if isinstance(v, (dict, list, tuple, np.ndarray, np.generic, int, float, complex, str, bool)) \
                    or v is None:
                out[str(k)] = to_jsonable(v)
        return out
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return None


def dumps_json(obj) -> str:
    """Canonical JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj), encoding="utf-8")
    return path


def grid_to_bytes(grid: SymbolGrid, scenario_hash: str = "") -> bytes:
    """Serialise a grid into the binary container."""
    header = {
        "shape": list(grid.shape),
        "t": float(grid.t),
        "hbar": float(grid.hbar),
        "kind": str(grid.kind),
        "scenario_hash": scenario_hash or str(grid.meta.get("scenario_hash", "")),
        "has_status": grid.status is not None,
        "meta": to_jsonable(grid.meta),
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_PREFIX.pack(MAGIC, VERSION, grid.n, len(text)))
    buf.write(text)
    for a in grid.axes:
        buf.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(grid.values, dtype="<c16").tobytes())
    if grid.status is not None:
        buf.write(np.ascontiguousarray(grid.status, dtype="i1").tobytes())
    return buf.getvalue()


def grid_from_bytes(data: bytes) -> SymbolGrid:
    """Inverse of :func:`grid_to_bytes`.

    Raises
    ------
    ScenarioError
        On a wrong magic number, unknown version or truncated payload.
    """
    if len(data) < _PREFIX.size:
        raise ScenarioError("grid file is truncated")
    magic, version, n, hlen = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise ScenarioError(f"not a grid file (magic {magic!r})")
    if version != VERSION:
        raise ScenarioError(f"unsupported grid file version {version}")
    pos = _PREFIX.size
    header = json.loads(data[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    shape = tuple(header["shape"])
    if len(shape) != 2 * n:
        raise ScenarioError("header shape does not match the stored dimension")
    size = int(np.prod(shape))
    need = 8 * sum(shape) + 16 * size + (size if header["has_status"] else 0)
    if len(data) - pos != need:
        raise ScenarioError(f"grid payload has {len(data) - pos} bytes, expected {need}")
    axes = []
    for k in shape:
        axes.append(np.frombuffer(data, dtype="<f8", count=k, offset=pos).astype(float))
        pos += 8 * k
    values = np.frombuffer(data, dtype="<c16", count=size, offset=pos).astype(complex).reshape(shape)
    pos += 16 * size
    status = None
    if header["has_status"]:
        status = np.frombuffer(data, dtype="i1", count=size, offset=pos).reshape(shape).copy()
    meta = dict(header.get("meta", {}))
    meta["scenario_hash"] = header.get("scenario_hash", "")
    return SymbolGrid(tuple(axes), values, header["t"], header["hbar"], header["kind"], status, None, meta)


def write_grid(path, grid: SymbolGrid, scenario_hash: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(grid_to_bytes(grid, scenario_hash))
    return path


def read_grid(path) -> SymbolGrid:
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"grid file {str(path)!r} does not exist")
    return grid_from_bytes(path.read_bytes())


def write_grid_csv(path, grid: SymbolGrid, scenario_hash: str = "") -> Path:
    """One row per grid point: coordinates, real and imaginary part, status.

    The first line is a comment carrying ``t``, ``hbar`` and the scenario
    hash.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pts = grid.points
    vals = grid.values.reshape(-1)
    status = grid.status.reshape(-1) if grid.status is not None else np.zeros(len(vals), dtype=np.int8)
    d = pts.shape[1]
    names = [f"q{i + 1}" for i in range(d // 2)] + [f"p{i + 1}" for i in range(d // 2)]
    h = scenario_hash or str(grid.meta.get("scenario_hash", ""))
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# t={float(grid.t)!r} hbar={float(grid.hbar)!r} kind={grid.kind} scenario_hash={h}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["re", "im", "status"])
        for x, v, s in zip(pts, vals, status):
            w.writerow([repr(float(c)) for c in x] + [repr(float(v.real)), repr(float(v.imag)), int(s)])
    return path
