"""Pairwise inter-part spatial relations from OBBs via the separating axis test.

All 15 candidate axes are tested (3 + 3 face normals and 9 edge cross
products, near-parallel crosses skipped). Exact zero gaps never survive
floating point, so contact uses ``EPS_TOUCH_REL`` (1e-6) of the mean OBB
diagonal. Directional labels are world-frame signs of the centroid offset
wherever the component exceeds ``THETA_DIR`` (0.25) of the larger
projection radius along that axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .obb import OBB

EPS_TOUCH_REL = 1e-6
THETA_DIR = 0.25

_WORLD_AXES = ("X", "Y", "Z")


class RelType(str, Enum):
    SEPARATE = "separate"
    TOUCH = "touch"
    INTERSECT = "intersect"
    CONTAIN = "contain"
    CONTAINED = "contained"


@dataclass(frozen=True)
class RelationEntry:
    rel_type: RelType
    rel_pos: frozenset[str]


RelationTable = dict[tuple[int, int], RelationEntry]


def eps_touch(a: OBB, b: OBB) -> float:
    return EPS_TOUCH_REL * 0.5 * (a.diagonal() + b.diagonal())


def _candidate_axes(a: OBB, b: OBB) -> list[np.ndarray]:
    axes = [*a.axes_matrix(), *b.axes_matrix()]
    out = [np.asarray(v, dtype=float) for v in axes]
    for u in a.axes_matrix():
        for v in b.axes_matrix():
            c = np.cross(u, v)
            n = np.linalg.norm(c)
            if n >= 1e-9:  # parallel edge pairs yield no separating information
                out.append(c / n)
    return out


def _projection_radius(obb: OBB, axis: np.ndarray) -> float:
    return float(np.sum(obb.half_vec() * np.abs(obb.axes_matrix() @ axis)))


def sat_test(a: OBB, b: OBB) -> tuple[bool, list[tuple[np.ndarray, float]]]:
    """(collides, separating-axis candidates with gap >= -eps_touch).

    ``collides`` is False iff some candidate axis shows a gap above the
    touch tolerance.
    """
    eps = eps_touch(a, b)
    offset = b.center_vec() - a.center_vec()
    collides = True
    sep_axes: list[tuple[np.ndarray, float]] = []
    for axis in _candidate_axes(a, b):
        t = abs(float(offset @ axis))
        gap = t - (_projection_radius(a, axis) + _projection_radius(b, axis))
        if gap > eps:
            collides = False
        if gap >= -eps:
            sep_axes.append((axis, gap))
    return collides, sep_axes


def _inside(inner: OBB, outer: OBB, eps: float) -> bool:
    return bool(np.all(outer.contains_points(inner.corners(), slack=eps)))


def classify_relation(a: OBB, b: OBB) -> RelType:
    """Separate / contained / contain / touch / intersect, tested in order."""
    eps = eps_touch(a, b)
    collides, sep_axes = sat_test(a, b)
    if not collides:
        return RelType.SEPARATE
    if _inside(a, b, eps):
        return RelType.CONTAINED
    if _inside(b, a, eps):
        return RelType.CONTAIN
    if any(-eps <= gap <= eps for _, gap in sep_axes):
        return RelType.TOUCH
    return RelType.INTERSECT


def directional_labels(a: OBB, b: OBB, theta: float = THETA_DIR) -> frozenset[str]:
    """World-frame offset labels of b relative to a, e.g. {+X, -Z}."""
    offset = b.center_vec() - a.center_vec()
    labels = set()
    for k, name in enumerate(_WORLD_AXES):
        axis = np.zeros(3)
        axis[k] = 1.0
        threshold = theta * max(_projection_radius(a, axis), _projection_radius(b, axis))
        if abs(offset[k]) > threshold:
            labels.add(("+" if offset[k] > 0 else "-") + name)
    return frozenset(labels)


def build_relation_table(obbs: Sequence[OBB]) -> RelationTable:
    """All ordered pairs (i, j), i != j, with duality guaranteed."""
    table: RelationTable = {}
    n = len(obbs)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (j, i) in table:
                prev = table[(j, i)]
                flipped = {
                    RelType.CONTAIN: RelType.CONTAINED,
                    RelType.CONTAINED: RelType.CONTAIN,
                }.get(prev.rel_type, prev.rel_type)
                pos = frozenset(("-" if s[0] == "+" else "+") + s[1:] for s in prev.rel_pos)
                table[(i, j)] = RelationEntry(flipped, pos)
            else:
                table[(i, j)] = RelationEntry(classify_relation(obbs[i], obbs[j]),
                                              directional_labels(obbs[i], obbs[j]))
    return table
