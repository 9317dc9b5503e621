"""Serialization of grids, field states and harmonic maps.

A state file is one JSON header line followed by the sample columns
``x, f, g``: either CSV text or packed little-endian float64 records.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .errors import InvalidArgument
from .model import FieldState, Form, ModelParams, make_grid

_LE = np.dtype("<f8")


def _header(state: FieldState, mode):
    return {
        "format": "wormhole-state", "version": 1, "mode": mode,
        "params": state.params.to_dict(),
        "grid": state.grid.to_dict(),
        "form": state.form.value, "time": state.time,
        "offset": state.offset, "n_records": len(state.f),
    }


def write_state(path, state: FieldState, mode: str = "csv"):
    if mode not in ("csv", "binary"):
        raise InvalidArgument("mode must be 'csv' or 'binary'")
    header = json.dumps(_header(state, mode), sort_keys=True)
    cols = np.column_stack([state.x, state.f, state.g])
    path = Path(path)
    if mode == "csv":
        buf = io.StringIO()
        np.savetxt(buf, cols, delimiter=",", fmt="%.17g", header="x,f,g", comments="")
        path.write_text(header + "\n" + buf.getvalue())
    else:
        with open(path, "wb") as fh:
            fh.write(header.encode() + b"\n")
            fh.write(cols.astype(_LE).tobytes())
    return path


def read_state(path) -> FieldState:
    raw = Path(path).read_bytes()
    line, _, body = raw.partition(b"\n")
    head = json.loads(line)
    if head.get("format") != "wormhole-state":
        raise InvalidArgument(f"{path} is not a state file")
    n = head["n_records"]
    if head["mode"] == "csv":
        cols = np.loadtxt(io.StringIO(body.decode()), delimiter=",", skiprows=1, ndmin=2)
    else:
        cols = np.frombuffer(body, dtype=_LE).reshape(n, 3)
    p = head["params"]
    gd = head["grid"]
    grid = make_grid(gd["half_width"], gd["n_points"])
    return FieldState(
        np.array(cols[:, 1]), np.array(cols[:, 2]), head["time"], Form(head["form"]),
        ModelParams(p["ell"], p["degree"]), grid, offset=head["offset"],
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def write_harmonic(directory, Q_map, extra: dict | None = None):
    """Manifest ``harmonic.json`` plus sample table ``harmonic.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = Q_map.to_manifest()
    if extra:
        manifest.update(extra)
    write_json(directory / "harmonic.json", manifest)
    g = Q_map.grid
    cols = np.column_stack([g.x, g.r, Q_map.Q, Q_map.Qx])
    np.savetxt(directory / "harmonic.csv", cols, delimiter=",", fmt="%.17g",
               header="x,r,Q,Qx", comments="")
    return directory


def read_harmonic_table(directory):
    directory = Path(directory)
    manifest = json.loads((directory / "harmonic.json").read_text())
    cols = np.loadtxt(directory / "harmonic.csv", delimiter=",", skiprows=1)
    return manifest, cols


def write_table(path, header, rows):
    """CSV with a header line; ``rows`` is a 2-D array-like."""
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        Path(path).write_text(",".join(header) + "\n")
        return path
    np.savetxt(path, np.atleast_2d(arr), delimiter=",", fmt="%.17g",
               header=",".join(header), comments="")
    return path


__all__ = [
    "write_state", "read_state", "write_json", "config_hash", "write_harmonic",
    "read_harmonic_table", "write_table",
]
