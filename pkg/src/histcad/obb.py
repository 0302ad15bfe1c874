"""Per-part oriented bounding boxes from sampled surface points.

Candidate frames are the world axes, the PCA axes of the sampled points,
and frames built from pairs of orthogonal triangle normals (which recover
exact axes for prismatic parts in any orientation). The best frame is then
refined by exhaustive 1-degree rotations about each of its axes. The result
always covers every sample point and is never worse than the PCA box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModelError
from .execute import execute_part
from .meshes import Mesh
from .model import Part

OBB_SAMPLES = 1024
OBB_SEED = 20240311


@dataclass(frozen=True)
class OBB:
    center: tuple[float, float, float]
    axes: tuple[tuple[float, float, float], ...]  # 3 orthonormal rows
    half_extents: tuple[float, float, float]

    def axes_matrix(self) -> np.ndarray:
        return np.asarray(self.axes, dtype=float)

    def center_vec(self) -> np.ndarray:
        return np.asarray(self.center, dtype=float)

    def half_vec(self) -> np.ndarray:
        return np.asarray(self.half_extents, dtype=float)

    def diagonal(self) -> float:
        return 2.0 * float(np.linalg.norm(self.half_vec()))

    def corners(self) -> np.ndarray:
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
                         dtype=float)
        return self.center_vec() + (signs * self.half_vec()) @ self.axes_matrix()

    def volume(self) -> float:
        h = self.half_vec()
        return float(8.0 * h[0] * h[1] * h[2])

    def contains_points(self, pts: np.ndarray, slack: float = 0.0) -> np.ndarray:
        local = (np.asarray(pts, dtype=float) - self.center_vec()) @ self.axes_matrix().T
        return np.all(np.abs(local) <= self.half_vec() + slack, axis=1)


def _frame_volume(points: np.ndarray, frame: np.ndarray) -> float:
    proj = points @ frame.T
    ext = proj.max(axis=0) - proj.min(axis=0)
    return float(np.prod(np.maximum(ext, 1e-30)))


def _orthonormal_frame(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a / np.linalg.norm(a)
    b = b - (b @ a) * a
    nb = np.linalg.norm(b)
    if nb < 1e-9:
        raise ValueError("parallel axes")
    b = b / nb
    return np.stack([a, b, np.cross(a, b)])


def _normal_frames(mesh: Mesh, max_normals: int = 12) -> list[np.ndarray]:
    a, b, c = mesh.triangle_points()
    raw = np.cross(b - a, c - a)
    areas = np.linalg.norm(raw, axis=1)
    keep = areas > 1e-12 * max(float(areas.max()), 1e-30)
    normals = raw[keep] / areas[keep][:, None]
    weights = areas[keep]
    # canonical sign, then area-weighted dedupe on a coarse direction grid
    flip = (normals[:, 0] < -1e-9) | \
           ((np.abs(normals[:, 0]) <= 1e-9) & (normals[:, 1] < -1e-9)) | \
           ((np.abs(normals[:, 0]) <= 1e-9) & (np.abs(normals[:, 1]) <= 1e-9) & (normals[:, 2] < 0))
    normals[flip] *= -1.0
    buckets: dict[tuple, tuple[np.ndarray, float]] = {}
    for n, w in zip(normals, weights):
        key = tuple(np.round(n, 6))
        if key in buckets:
            vec, tot = buckets[key]
            buckets[key] = (vec, tot + w)
        else:
            buckets[key] = (n, w)
    ranked = sorted(buckets.values(), key=lambda vw: -vw[1])[:max_normals]
    dirs = [v for v, _ in ranked]
    frames = []
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            if abs(float(dirs[i] @ dirs[j])) < 1e-6:
                frames.append(_orthonormal_frame(dirs[i], dirs[j]))
    return frames


def _rotated_frame(frame: np.ndarray, axis_idx: int, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    i, j = (axis_idx + 1) % 3, (axis_idx + 2) % 3
    u, v = frame[i], frame[j]
    out = frame.copy()
    out[i] = c * u + s * v
    out[j] = -s * u + c * v
    # axis row unchanged; renormalize against drift
    out[i] /= np.linalg.norm(out[i])
    out[j] /= np.linalg.norm(out[j])
    return out


def obb_from_points(points: np.ndarray, mesh: Mesh = None) -> OBB:
    """Minimum-volume box over the candidate frames plus 1-degree refinement."""
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise DegenerateModelError("not enough points for an oriented bounding box")

    candidates = [np.eye(3)]
    centered = points - points.mean(axis=0)
    try:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        if vt.shape[0] == 3:
            candidates.append(vt)
    except np.linalg.LinAlgError:
        pass
    if mesh is not None:
        candidates.extend(_normal_frames(mesh))

    best = min(candidates, key=lambda f: _frame_volume(points, f))
    best_vol = _frame_volume(points, best)

    # two sweeps of per-axis 1-degree rotations, keeping improvements
    for _ in range(2):
        improved = False
        for axis_idx in range(3):
            for deg in range(1, 90):
                cand = _rotated_frame(best, axis_idx, math.radians(deg))
                vol = _frame_volume(points, cand)
                if vol < best_vol * (1.0 - 1e-12):
                    best, best_vol = cand, vol
                    improved = True
        if not improved:
            break

    proj = points @ best.T
    lo = proj.min(axis=0)
    hi = proj.max(axis=0)
    half = (hi - lo) / 2.0
    center_local = (hi + lo) / 2.0
    center = center_local @ best

    order = np.argsort(-half)
    axes = best[order]
    half = half[order]
    for k in range(3):
        lead = np.argmax(np.abs(axes[k]))
        if axes[k][lead] < 0:
            axes[k] = -axes[k]
    if np.linalg.det(axes) < 0:
        axes[2] = -axes[2]

    return OBB(tuple(float(v) for v in center),
               tuple(tuple(float(v) for v in row) for row in axes),
               tuple(float(v) for v in half))


def compute_obb(part: Part, samples: int = OBB_SAMPLES, seed: int = OBB_SEED) -> OBB:
    """Execute the part standalone and fit an OBB over its surface points."""
    mesh = execute_part(part)
    if mesh is None or len(mesh.vertices) == 0:
        raise DegenerateModelError("part has no executable geometry")
    rng = np.random.default_rng(seed)
    pts = np.concatenate([mesh.vertices, mesh.sample_surface(samples, rng)])
    return obb_from_points(pts, mesh)
