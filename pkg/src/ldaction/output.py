"""Deterministic on-disk formats for field and point-set outputs.

Two field formats: ``csv`` (one combined file, header
x,y,forward,backward,total,mask) and ``f64bin`` (row-major little-endian
doubles, no header, one file per component with a ``<name>.meta.json``
sidecar carrying the grid geometry, a run-length encoded mask and the
resolved config echo).  All writers format numbers reproducibly so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .ld import FieldSet, ScalarField
from .sections import Axis


def _fmt(v: float) -> str:
    return format(v, ".17g")


def mask_rle(mask: np.ndarray) -> dict:
    """Run-length encoding of the row-major flattened mask."""
    flat = mask.ravel()
    if flat.size == 0:
        return {"first": True, "runs": []}
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate([[0], changes, [flat.size]])
    runs = np.diff(bounds).tolist()
    return {"first": bool(flat[0]), "runs": runs}


def mask_from_rle(rle: dict, shape) -> np.ndarray:
    flat = np.empty(int(np.prod(shape)), dtype=bool)
    val = rle["first"]
    pos = 0
    for run in rle["runs"]:
        flat[pos: pos + run] = val
        pos += run
        val = not val
    if pos != flat.size:
        raise ValueError("mask run-length data does not cover the grid")
    return flat.reshape(shape)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def write_field_bin(directory, name: str, fld: ScalarField, config_echo=None) -> list[str]:
    directory = Path(directory)
    bin_name = f"{name}.f64bin"
    meta_name = f"{name}.meta.json"
    data = np.ascontiguousarray(fld.values, dtype="<f8")
    (directory / bin_name).write_bytes(data.tobytes())
    meta = {
        "nx": fld.x_axis.count,
        "ny": fld.y_axis.count,
        "x_axis": {"min": fld.x_axis.lo, "max": fld.x_axis.hi, "count": fld.x_axis.count},
        "y_axis": {"min": fld.y_axis.lo, "max": fld.y_axis.hi, "count": fld.y_axis.count},
        "mask_rle": mask_rle(fld.mask),
        "config": config_echo,
    }
    _dump_json(directory / meta_name, meta)
    return [bin_name, meta_name]


def read_field_bin(meta_path) -> ScalarField:
    meta_path = Path(meta_path)
    meta = json.loads(meta_path.read_text())
    nx, ny = meta["nx"], meta["ny"]
    bin_path = meta_path.with_name(meta_path.name.replace(".meta.json", ".f64bin"))
    values = np.frombuffer(bin_path.read_bytes(), dtype="<f8").reshape(nx, ny).copy()
    xa = Axis(meta["x_axis"]["min"], meta["x_axis"]["max"], meta["x_axis"]["count"])
    ya = Axis(meta["y_axis"]["min"], meta["y_axis"]["max"], meta["y_axis"]["count"])
    mask = mask_from_rle(meta["mask_rle"], (nx, ny))
    return ScalarField(values=values, x_axis=xa, y_axis=ya, mask=mask,
                       metadata={"config": meta.get("config")})


def write_field_csv(directory, name: str, fields: FieldSet) -> list[str]:
    directory = Path(directory)
    fname = f"{name}.csv"
    f = fields.forward
    xv = f.x_axis.values()
    yv = f.y_axis.values()
    lines = ["x,y,forward,backward,total,mask"]
    for i in range(f.x_axis.count):
        for j in range(f.y_axis.count):
            lines.append(
                f"{_fmt(xv[i])},{_fmt(yv[j])},{_fmt(fields.forward.values[i, j])},"
                f"{_fmt(fields.backward.values[i, j])},{_fmt(fields.total.values[i, j])},"
                f"{int(f.mask[i, j])}"
            )
    (directory / fname).write_text("\n".join(lines) + "\n")
    return [fname]


def write_scalar_csv(directory, name: str, fld: ScalarField) -> list[str]:
    directory = Path(directory)
    fname = f"{name}.csv"
    xv = fld.x_axis.values()
    yv = fld.y_axis.values()
    lines = ["x,y,value,mask"]
    for i in range(fld.x_axis.count):
        for j in range(fld.y_axis.count):
            lines.append(f"{_fmt(xv[i])},{_fmt(yv[j])},{_fmt(fld.values[i, j])},{int(fld.mask[i, j])}")
    (directory / fname).write_text("\n".join(lines) + "\n")
    return [fname]


def write_points_csv(directory, name: str, header: str, rows) -> list[str]:
    directory = Path(directory)
    fname = f"{name}.csv"
    lines = [header]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    (directory / fname).write_text("\n".join(lines) + "\n")
    return [fname]


def write_manifest(directory, command: str, config: dict, version: str, outputs: list[str]) -> str:
    directory = Path(directory)
    manifest = {
        "version": version,
        "command": command,
        "config": config,
        "outputs": sorted(outputs),
    }
    _dump_json(directory / "manifest.json", manifest)
    return "manifest.json"
