"""Triangle meshes of the zero level set and the file formats around them."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage import measure

from .topology import FilteredGrid

DEGENERATE_AREA = 1e-12


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("face index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    def __len__(self):
        return len(self.faces)

    def areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, i]] for i in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _compact(vertices, faces) -> TriangleMesh:
    used, inverse = np.unique(faces.ravel(), return_inverse=True)
    return TriangleMesh(vertices[used], inverse.reshape(-1, 3))


def marching_cubes(grid: FilteredGrid, iso: float = 0.0) -> TriangleMesh:
    """Triangulate ``{phi = iso}`` with linear edge interpolation.

    A grid that never crosses ``iso`` yields an empty mesh.  Triangles of
    area at most ``1e-12`` are dropped.
    """
    values = grid.values
    if not (values.min() < iso < values.max()):
        return TriangleMesh.empty()
    lo, hi = (np.asarray(t, dtype=float) for t in grid.box)
    spacing = tuple((hi - lo) / (np.asarray(grid.resolution) - 1))
    verts, faces, _, _ = measure.marching_cubes(values, level=iso, spacing=spacing, allow_degenerate=False)
    mesh = TriangleMesh(verts + lo, faces)
    keep = mesh.areas() > DEGENERATE_AREA
    if not keep.any():
        return TriangleMesh.empty()
    return _compact(mesh.vertices, mesh.faces[keep])


# ---------------------------------------------------------------------------
# formats


def _io_error(path, exc) -> OSError:
    return OSError(f"cannot write {path}: {exc.strerror or exc}")


def write_obj(mesh: TriangleMesh, path) -> None:
    path = Path(path)
    lines = [f"v {x:.9g} {y:.9g} {z:.9g}" for x, y, z in mesh.vertices]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in mesh.faces]
    try:
        path.write_text("\n".join(lines) + ("\n" if lines else ""))
    except OSError as exc:
        raise _io_error(path, exc) from exc


def read_obj(path) -> TriangleMesh:
    verts, faces = [], []
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "v":
            verts.append([float(t) for t in parts[1:4]])
        elif parts[0] == "f":
            faces.append([int(t.split("/")[0]) - 1 for t in parts[1:4]])
    return TriangleMesh(np.array(verts).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3))


def write_stl(mesh: TriangleMesh, path) -> None:
    """Binary STL: 80-byte header, triangle count, then 50 bytes per triangle."""
    path = Path(path)
    tri = mesh.vertices[mesh.faces].astype("<f4")
    normals = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, norm, out=np.zeros_like(normals), where=norm > 0)
    record = np.zeros(len(tri), dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")])
    record["n"] = normals
    record["v"] = tri
    try:
        with open(path, "wb") as fh:
            fh.write(b"topoblend zero level set".ljust(80, b"\0"))
            fh.write(struct.pack("<I", len(tri)))
            fh.write(record.tobytes())
    except OSError as exc:
        raise _io_error(path, exc) from exc


def read_stl(path) -> np.ndarray:
    """Triangles ``(n, 3, 3)`` of a binary STL."""
    data = Path(path).read_bytes()
    (n,) = struct.unpack_from("<I", data, 80)
    record = np.frombuffer(data, dtype=[("n", "<f4", 3), ("v", "<f4", (3, 3)), ("attr", "<u2")], count=n, offset=84)
    return record["v"].astype(float)


def write_grid(grid: FilteredGrid, path) -> tuple[Path, Path]:
    """Raw little-endian float32 samples (C order) plus a JSON sidecar.

    ``path`` may end in ``.raw``; the sidecar is the same stem with ``.json``.
    """
    raw = Path(path).with_suffix(".raw")
    side = raw.with_suffix(".json")
    meta = {
        "dims": list(grid.resolution),
        "box": [list(grid.box[0]), list(grid.box[1])],
        "dtype": "float32",
        "byte_order": "little",
        "order": "C",
    }
    try:
        raw.write_bytes(np.ascontiguousarray(grid.values, dtype="<f4").tobytes())
        side.write_text(json.dumps(meta, indent=2))
    except OSError as exc:
        raise _io_error(raw, exc) from exc
    return raw, side


def read_grid(path) -> FilteredGrid:
    """Inverse of :func:`write_grid`; accepts either the ``.raw`` or the ``.json`` path."""
    raw = Path(path).with_suffix(".raw")
    meta = json.loads(raw.with_suffix(".json").read_text())
    dims = tuple(int(n) for n in meta["dims"])
    values = np.frombuffer(raw.read_bytes(), dtype="<f4")
    if values.size != int(np.prod(dims)):
        raise ValueError(f"{raw}: expected {int(np.prod(dims))} samples, found {values.size}")
    return FilteredGrid(values.reshape(dims).astype(float), (tuple(meta["box"][0]), tuple(meta["box"][1])))


def write_json(obj: dict, path) -> None:
    path = Path(path)
    try:
        path.write_text(json.dumps(obj, indent=2))
    except OSError as exc:
        raise _io_error(path, exc) from exc
