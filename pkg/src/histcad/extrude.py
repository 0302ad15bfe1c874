"""Profile extrusion to closed triangle meshes: prisms and solids of revolution.

Linear extrusion length is measured along the direction vector itself, so a
prism's volume is ``area * length * |direction . plane_normal|``. Revolves
tessellate at 256 angular steps per full turn (proportional for partial
sweeps); full turns close periodically, partial sweeps get planar end caps.
All emitted meshes are watertight and oriented outward.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DegenerateDirectionError, ProfileCrossesAxisError
from .meshes import Mesh
from .model import SketchPlane
from .profiles import Profile

REVOLVE_STEPS_FULL_TURN = 256

_TWO_PI = 2.0 * math.pi


def _wall_quads(ring_sizes: list[int], bottom_offset: int, top_offset: int) -> list[tuple[int, int, int]]:
    """Side triangles between two stacked copies of the profile rings.

    Ring orientation (outer CCW, holes CW) makes the same quad pattern face
    outward everywhere when the sweep follows the plane normal.
    """
    tris = []
    base = 0
    for n in ring_sizes:
        for i in range(n):
            j = (i + 1) % n
            b0 = bottom_offset + base + i
            b1 = bottom_offset + base + j
            t0 = top_offset + base + i
            t1 = top_offset + base + j
            tris.append((b0, b1, t1))
            tris.append((b0, t1, t0))
        base += n
    return tris


def extrude_linear(profile: Profile, plane: SketchPlane, direction, length: float,
                   back_length: float = 0.0, symmetric: bool = False) -> Mesh:
    """Prism from sweeping the profile along a world-space unit direction."""
    if length <= 0:
        raise DegenerateDirectionError("extrusion length must be positive")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    normal = plane.normal()
    if abs(float(d @ normal)) < 1e-9:
        raise DegenerateDirectionError("extrusion direction lies in the sketch plane")

    if symmetric:
        fwd, back = length / 2.0, -length / 2.0
    else:
        fwd, back = length, -back_length

    pts2d = profile.all_points()
    base3d = plane.to_world(pts2d)
    bottom = base3d + d * back
    top = base3d + d * fwd
    n = len(pts2d)

    cap = profile.triangulate()
    tris: list[tuple[int, int, int]] = []
    # bottom cap reversed, top cap as-is; a final orientation pass fixes
    # oblique/negative-normal cases wholesale
    tris.extend((int(a), int(c), int(b)) for a, b, c in cap)
    tris.extend((int(a) + n, int(b) + n, int(c) + n) for a, b, c in cap)
    tris.extend(_wall_quads([len(r) for r in profile.rings()], 0, n))

    mesh = Mesh(np.concatenate([bottom, top]), np.asarray(tris, dtype=np.int32))
    return mesh.oriented_outward()


def _axis_in_plane(plane: SketchPlane, axis_point, axis_dir):
    """Project the rotation axis into sketch coordinates; must lie in-plane."""
    axis_point = np.asarray(axis_point, dtype=float)
    axis_dir = np.asarray(axis_dir, dtype=float)
    axis_dir = axis_dir / np.linalg.norm(axis_dir)
    normal = plane.normal()
    if abs(float(axis_dir @ normal)) > 1e-9:
        raise ProfileCrossesAxisError("rotation axis must lie in the sketch plane")
    off = float((axis_point - np.asarray(plane.translation)) @ normal)
    if abs(off) > 1e-9 * max(1.0, float(np.linalg.norm(axis_point))):
        raise ProfileCrossesAxisError("rotation axis must lie in the sketch plane")
    a0_2d = plane.to_plane(axis_point[None, :])[0]
    dir3 = plane.rotation().T @ axis_dir
    a_dir_2d = np.array([dir3[0], dir3[1]])
    a_dir_2d = a_dir_2d / np.linalg.norm(a_dir_2d)
    return a0_2d, a_dir_2d, axis_point, axis_dir


def extrude_rotated(profile: Profile, plane: SketchPlane, axis_point, axis_dir,
                    start_angle: float, end_angle: float) -> Mesh:
    """Solid of revolution about an in-plane axis over (0, 2*pi] sweep."""
    sweep = end_angle - start_angle
    if not 0.0 < sweep <= _TWO_PI + 1e-12:
        raise ProfileCrossesAxisError("sweep must lie in (0, 2*pi]")
    full_turn = abs(sweep - _TWO_PI) <= 1e-12

    a0_2d, a_dir_2d, a0_3d, a_dir_3d = _axis_in_plane(plane, axis_point, axis_dir)

    pts2d = profile.all_points()
    rel = pts2d - a0_2d
    h = rel @ a_dir_2d
    s = rel[:, 0] * (-a_dir_2d[1]) + rel[:, 1] * a_dir_2d[0]  # signed offset from axis
    extent = float(np.max(np.abs(pts2d))) if len(pts2d) else 1.0
    eps = 1e-9 * max(extent, 1.0)
    if s.min() < -eps and s.max() > eps:
        raise ProfileCrossesAxisError("profile straddles the rotation axis")
    if np.any(np.abs(s) <= eps):
        raise ProfileCrossesAxisError("profile touches the rotation axis")

    # radial frame: i_hat points toward the profile side, j_hat = axis x i_hat
    perp2d = np.array([-a_dir_2d[1], a_dir_2d[0]])
    side = 1.0 if s.max() > 0 else -1.0
    i_hat = plane.to_world_vec(perp2d) * side
    j_hat = np.cross(a_dir_3d, i_hat)
    r = np.abs(s)

    n_steps = max(8, int(math.ceil(REVOLVE_STEPS_FULL_TURN * sweep / _TWO_PI)))
    n_rings = n_steps if full_turn else n_steps + 1
    n = len(pts2d)

    rings = []
    for k in range(n_rings):
        ang = start_angle + sweep * (k / n_steps)
        ca, sa = math.cos(ang), math.sin(ang)
        rings.append(a0_3d + np.outer(h, a_dir_3d) + np.outer(r * ca, i_hat) + np.outer(r * sa, j_hat))
    verts = np.concatenate(rings)

    ring_sizes = [len(rg) for rg in profile.rings()]
    tris: list[tuple[int, int, int]] = []
    for k in range(n_steps):
        k_next = (k + 1) % n_rings
        tris.extend(_wall_quads(ring_sizes, k * n, k_next * n))

    if not full_turn:
        cap = profile.triangulate()
        last = (n_rings - 1) * n
        tris.extend((int(a), int(c), int(b)) for a, b, c in cap)                 # start cap
        tris.extend((int(a) + last, int(b) + last, int(c) + last) for a, b, c in cap)  # end cap

    mesh = Mesh(verts, np.asarray(tris, dtype=np.int32))
    return mesh.oriented_outward()
