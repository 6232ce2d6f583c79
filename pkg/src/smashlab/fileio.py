"""File formats: PGM rasters, CSV ledgers, JSON manifests and scenes.

Masks serialize to binary 8-bit PGM (0 = false, 255 = true); a 1d mask is a
1-row image and a 3d mask is a stack of per-slice PGMs plus a JSON index.
Density fields serialize to 16-bit PGM under a stated scale factor and to a
sparse CSV of nonzero cells.  Manifests segregate timing under a ``timing``
key so that repeated runs differ only there.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .geometry import GridSpec, Mask, parse_shape
from .sandpile import DensityField, SumResult

__all__ = [
    "write_mask_pgm",
    "read_mask_pgm",
    "write_field_pgm16",
    "write_field_csv",
    "write_sum_result",
    "write_manifest",
    "write_csv_rows",
    "Scene",
    "load_scene",
]


def _write_pgm(path: Path, data: np.ndarray, maxval: int):
    if data.ndim == 1:
        data = data[None, :]
    if data.ndim != 2:
        raise ConfigError("PGM writer takes 1d or 2d arrays")
    h, w = data.shape
    header = f"P5\n{w} {h}\n{maxval}\n".encode("ascii")
    body = data.astype(">u2" if maxval > 255 else "u1").tobytes()
    path.write_bytes(header + body)


def _read_pgm(path: Path):
    raw = path.read_bytes()
    if not raw.startswith(b"P5"):
        raise ConfigError(f"{path} is not a binary PGM")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while raw[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(raw[start:pos]))
    pos += 1
    w, h, maxval = fields
    dtype = ">u2" if maxval > 255 else "u1"
    data = np.frombuffer(raw[pos:], dtype=dtype, count=w * h).reshape(h, w)
    return data, maxval


def write_mask_pgm(mask: Mask, path) -> list:
    """Write a mask to PGM; 3d masks become slice files plus an index.

    Returns the list of files written.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(mask.cells, 255, 0)
    if mask.grid.d in (1, 2):
        _write_pgm(path, data, 255)
        return [path]
    files = []
    stem = path.with_suffix("")
    for k in range(mask.grid.shape[0]):
        slice_path = Path(f"{stem}_z{k:04d}.pgm")
        _write_pgm(slice_path, data[k], 255)
        files.append(slice_path)
    index = {
        "axis": 0,
        "shape": list(mask.grid.shape),
        "slices": [f.name for f in files],
    }
    index_path = Path(f"{stem}.idx.json")
    index_path.write_text(json.dumps(index, indent=2) + "\n")
    return files + [index_path]


def read_mask_pgm(grid: GridSpec, path) -> Mask:
    """Read a mask previously written by :func:`write_mask_pgm`."""
    path = Path(path)
    if grid.d in (1, 2):
        data, _ = _read_pgm(path)
        if grid.d == 1:
            data = data[0]
        return Mask(grid, data > 127)
    index = json.loads(Path(f"{path.with_suffix('')}.idx.json").read_text())
    slices = []
    for name in index["slices"]:
        data, _ = _read_pgm(path.parent / name)
        slices.append(data > 127)
    return Mask(grid, np.stack(slices, axis=0))


def write_field_pgm16(f: DensityField, path) -> float:
    """Write a field to 16-bit PGM scaled to the full range; returns the
    scale factor (stored value = scale * density)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    vmax = float(f.values.max()) if f.values.size else 0.0
    scale = 65535.0 / vmax if vmax > 0 else 1.0
    data = np.clip(np.rint(f.values * scale), 0, 65535)
    if f.grid.d == 3:
        stem = path.with_suffix("")
        for k in range(f.grid.shape[0]):
            _write_pgm(Path(f"{stem}_z{k:04d}.pgm"), data[k], 65535)
    else:
        _write_pgm(path, data, 65535)
    return scale


def write_field_csv(f: DensityField, path, value_name: str = "value"):
    """Sparse CSV of nonzero cells: one index column per axis plus the value."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    idx = np.argwhere(f.values != 0)
    vals = f.values[tuple(idx.T)] if len(idx) else np.empty(0)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{k}" for k in range(f.grid.d)] + [value_name])
        for row, v in zip(idx, vals):
            writer.writerow([int(r) for r in row] + [repr(float(v))])


def write_csv_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [repr(float(v)) if isinstance(v, float) else v for v in row]
            )


def write_manifest(path, payload: dict, runtime_s: float | None = None):
    """Write a JSON manifest with timing segregated from reproducible content."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = dict(payload)
    doc["timing"] = {
        "written_at_unix": time.time(),
        "runtime_s": runtime_s,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def write_sum_result(out_dir, result: SumResult, extra: dict | None = None, runtime_s=None):
    """Write ``domain.pgm``, ``odometer.csv``, and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_mask_pgm(result.domain, out / "domain.pgm")
    write_field_csv(result.odometer, out / "odometer.csv", value_name="odometer")
    payload = {
        "grid": {
            "h": result.domain.grid.h,
            "lo": list(result.domain.grid.lo),
            "shape": list(result.domain.grid.shape),
        },
        "residual": result.residual,
        "sweeps": result.sweeps,
        "mass_drift": result.mass_drift,
        "converged": result.converged,
        "domain_measure": result.domain.measure,
    }
    if extra:
        payload.update(extra)
    write_manifest(out / "manifest.json", payload, runtime_s=runtime_s)


@dataclass(frozen=True)
class Scene:
    """Named trio of shapes on a common dimension; ``c`` is optional."""

    name: str
    d: int
    a: object
    b: object
    c: object = None

    def shapes(self):
        return [s for s in (self.a, self.b, self.c) if s is not None]


def load_scene(source) -> Scene:
    """Load a scene from a JSON file path or a dict:
    ``{"name": ..., "d": 2, "A": <shape>, "B": <shape>, "C": <shape>}``."""
    if isinstance(source, (str, Path)):
        try:
            obj = json.loads(Path(source).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read scene {source}: {exc}") from exc
        default_name = Path(source).stem
    else:
        obj = source
        default_name = "scene"
    if not isinstance(obj, dict) or "A" not in obj or "B" not in obj:
        raise ConfigError("scene must be an object with at least A and B shapes")
    d = int(obj.get("d", 2))
    a = parse_shape(obj["A"])
    b = parse_shape(obj["B"])
    c = parse_shape(obj["C"]) if "C" in obj else None
    for s in (a, b, c):
        if s is not None and s.dim != d:
            raise ConfigError("scene shapes do not match the declared dimension")
    return Scene(obj.get("name", default_name), d, a, b, c)
