"""Triangle meshes: volume, watertightness, surface sampling, STL/XYZ export.

Solids are closed, outward-oriented triangle meshes (positive signed
volume). Watertightness demands every undirected edge shared by exactly two
triangles with opposite directions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np

from .errors import EmptySetError


@dataclass
class Mesh:
    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray     # (m, 3) int32, outward CCW

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangle_points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        f = self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def volume(self) -> float:
        """Signed volume via the divergence theorem (positive for solids)."""
        a, b, c = self.triangle_points()
        return float(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c)))) / 6.0

    def area(self) -> float:
        a, b, c = self.triangle_points()
        return float(np.sum(np.linalg.norm(np.cross(b - a, c - a), axis=1))) / 2.0

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def flipped(self) -> "Mesh":
        return Mesh(self.vertices, self.faces[:, ::-1])

    def oriented_outward(self) -> "Mesh":
        return self if self.volume() >= 0 else self.flipped()

    def merged(self, other: "Mesh") -> "Mesh":
        if len(self.vertices) == 0:
            return other
        if len(other.vertices) == 0:
            return self
        verts = np.concatenate([self.vertices, other.vertices])
        faces = np.concatenate([self.faces, other.faces + len(self.vertices)])
        return Mesh(verts, faces)

    def is_watertight(self) -> bool:
        """Edge-manifold check: each undirected edge in exactly 2 opposite-
        direction triangles; degenerate (repeated-index) faces disqualify."""
        f = self.faces
        if len(f) == 0:
            return False
        if np.any(f[:, 0] == f[:, 1]) or np.any(f[:, 1] == f[:, 2]) or np.any(f[:, 0] == f[:, 2]):
            return False
        directed = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        seen: dict[tuple[int, int], int] = {}
        for e in map(tuple, directed.tolist()):
            seen[e] = seen.get(e, 0) + 1
        for (u, v), n in seen.items():
            if n != 1 or seen.get((v, u), 0) != 1:
                return False
        return True

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Area-weighted uniform surface samples (deterministic given rng)."""
        if len(self.faces) == 0:
            raise EmptySetError("mesh has no faces to sample")
        a, b, c = self.triangle_points()
        areas = np.linalg.norm(np.cross(b - a, c - a), axis=1) / 2.0
        total = float(areas.sum())
        if total <= 0:
            raise EmptySetError("mesh has zero surface area")
        idx = rng.choice(len(areas), size=n, p=areas / total)
        u = rng.random(n)
        v = rng.random(n)
        flip = u + v > 1.0
        u[flip] = 1.0 - u[flip]
        v[flip] = 1.0 - v[flip]
        return a[idx] + u[:, None] * (b[idx] - a[idx]) + v[:, None] * (c[idx] - a[idx])


# --- STL (binary, little-endian) -----------------------------------------------------

_STL_HEADER = b"histcad binary stl" + b" " * 62


def write_stl(mesh: Mesh, target: Union[str, BinaryIO]) -> None:
    """Binary STL: 80-byte header, uint32 count, per-triangle normal+vertices."""
    a, b, c = mesh.triangle_points()
    normals = np.cross(b - a, c - a)
    lens = np.linalg.norm(normals, axis=1)
    lens[lens == 0] = 1.0
    normals = normals / lens[:, None]

    def _write(fh: BinaryIO) -> None:
        fh.write(_STL_HEADER[:80])
        fh.write(struct.pack("<I", len(mesh.faces)))
        for i in range(len(mesh.faces)):
            fh.write(struct.pack("<3f", *normals[i]))
            fh.write(struct.pack("<3f", *a[i]))
            fh.write(struct.pack("<3f", *b[i]))
            fh.write(struct.pack("<3f", *c[i]))
            fh.write(struct.pack("<H", 0))

    if isinstance(target, str):
        with open(target, "wb") as fh:
            _write(fh)
    else:
        _write(target)


def read_stl(source: Union[str, BinaryIO]) -> Mesh:
    """Read binary STL back into an (unwelded) mesh; used by round-trip checks."""
    if isinstance(source, str):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if len(data) < 84:
        raise ValueError("not a binary STL: too short")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + count * 50
    if len(data) < expected:
        raise ValueError("binary STL truncated")
    tri = np.frombuffer(data[84:expected], dtype=np.uint8).reshape(count, 50)
    floats = tri[:, :48].copy().view("<f4").reshape(count, 4, 3)
    verts = floats[:, 1:4, :].reshape(-1, 3).astype(float)
    faces = np.arange(len(verts), dtype=np.int32).reshape(-1, 3)
    return weld_vertices(Mesh(verts, faces))


def weld_vertices(mesh: Mesh, decimals: int = 6) -> Mesh:
    """Merge positionally identical vertices (tolerant to float32 round-trip)."""
    key = np.round(mesh.vertices, decimals)
    _, index, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    return Mesh(mesh.vertices[index], inverse[mesh.faces].astype(np.int32))


def write_xyz(points: np.ndarray, target: str) -> None:
    """Plain-text point cloud: one `x y z` line per point."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    with open(target, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")


def read_xyz(source: str) -> np.ndarray:
    pts = []
    with open(source, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                parts = line.split()
                pts.append((float(parts[0]), float(parts[1]), float(parts[2])))
    return np.asarray(pts, dtype=float).reshape(-1, 3)
