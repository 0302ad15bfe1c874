"""Shared fixture builders: canonical sketches, documents, and random generators."""

from __future__ import annotations

import math

import numpy as np
import pytest

from histcad.formats import HierCurve, HierFace, HierLoop, HierarchicalSketch
from histcad.model import (Anchor, Arc, BooleanOp, Circle, Constraint,
                           ConstraintKind, ConstraintRef, Document,
                           DocumentMetadata, Line, LinearExtrusion, Part,
                           RotatedExtrusion, Sketch, SketchPlane)
from histcad.obb import OBB


def square_lines(x0=0.0, y0=0.0, side=1.0, prefix="l"):
    x1, y1 = x0 + side, y0 + side
    return (
        Line(f"{prefix}0", (x0, y0), (x1, y0)),
        Line(f"{prefix}1", (x1, y0), (x1, y1)),
        Line(f"{prefix}2", (x1, y1), (x0, y1)),
        Line(f"{prefix}3", (x0, y1), (x0, y0)),
    )


def square_sketch(x0=0.0, y0=0.0, side=1.0, plane=None, constraints=()):
    return Sketch(plane or SketchPlane(), square_lines(x0, y0, side), tuple(constraints))


def square_doc(side=1.0, length=2.0):
    return Document((Part(square_sketch(side=side), LinearExtrusion((0.0, 0.0, 1.0), length)),))


def arc_points(center, radius, a0, am, a1):
    cx, cy = center
    return ((cx + radius * math.cos(a0), cy + radius * math.sin(a0)),
            (cx + radius * math.cos(am), cy + radius * math.sin(am)),
            (cx + radius * math.cos(a1), cy + radius * math.sin(a1)))


def make_arc(pid, center, radius, a0, am, a1):
    s, m, e = arc_points(center, radius, a0, am, a1)
    return Arc(pid, s, m, e)


def hier_rect_loop(x0, y0, x1, y1, prefix):
    return HierLoop(tuple(HierCurve(c) for c in (
        Line(f"{prefix}_b", (x0, y0), (x1, y0)),
        Line(f"{prefix}_r", (x1, y0), (x1, y1)),
        Line(f"{prefix}_t", (x1, y1), (x0, y1)),
        Line(f"{prefix}_l", (x0, y1), (x0, y0)),
    )))


def hier_circle_loop(cx, cy, r, pid):
    return HierLoop((HierCurve(Circle(pid, (cx, cy), r)),))


def hier_single_face(*loops, plane=None, constraints=()):
    return HierarchicalSketch(plane or SketchPlane(), (HierFace(tuple(loops)),),
                              tuple(constraints))


def world_obb(center, half, rot=None):
    axes = np.eye(3) if rot is None else np.asarray(rot, dtype=float)
    return OBB(tuple(float(v) for v in center),
               tuple(tuple(float(v) for v in row) for row in axes),
               tuple(float(v) for v in half))


def rotation_about(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    c, s = math.cos(angle), math.sin(angle)
    x, y, z = axis
    return np.array([
        [c + x * x * (1 - c), x * y * (1 - c) - z * s, x * z * (1 - c) + y * s],
        [y * x * (1 - c) + z * s, c + y * y * (1 - c), y * z * (1 - c) - x * s],
        [z * x * (1 - c) - y * s, z * y * (1 - c) + x * s, c + z * z * (1 - c)],
    ])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_obb(rng: np.random.Generator, center_range=2.0) -> OBB:
    center = rng.uniform(-center_range, center_range, size=3)
    half = rng.uniform(0.2, 1.0, size=3)
    rot = random_rotation(rng)
    return world_obb(center, half, rot)


def random_star_polygon(rng: np.random.Generator, n: int = None) -> np.ndarray:
    """Simple CCW polygon star-shaped about the origin (all angular gaps < pi)."""
    if n is None:
        n = int(rng.integers(5, 24))
    increments = rng.uniform(0.5, 1.5, n)
    angles = 2 * math.pi * np.cumsum(increments) / increments.sum()
    radii = rng.uniform(0.5, 2.0, n)
    return np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)


def random_document(rng: np.random.Generator) -> Document:
    """Random valid document: 1-3 parts of squares/circles/arcs with legal
    constraints and mixed extrusions (used by round-trip and fuzz tests)."""
    n_parts = int(rng.integers(1, 4))
    parts = []
    for pi in range(n_parts):
        side = float(rng.uniform(0.5, 3.0))
        x0 = float(rng.uniform(-2, 2))
        y0 = float(rng.uniform(-2, 2))
        prims = list(square_lines(x0, y0, side))
        if rng.random() < 0.6:
            prims.append(Circle("c0", (x0 + side / 2, y0 + side / 2), side * 0.2))
        if rng.random() < 0.4:
            prims.append(make_arc("a0", (x0 - 2 * side, y0), side * 0.3,
                                  0.1, 1.0, 2.0))
        cons = [
            Constraint(ConstraintKind.COINCIDENT,
                       (ConstraintRef("l0", Anchor.END), ConstraintRef("l1", Anchor.START))),
            Constraint(ConstraintKind.HORIZONTAL, (ConstraintRef("l0"),)),
            Constraint(ConstraintKind.PERPENDICULAR,
                       (ConstraintRef("l0"), ConstraintRef("l1"))),
        ]
        if rng.random() < 0.3:
            cons.append(Constraint(ConstraintKind.FIX, (ConstraintRef("l0"),),
                                   pin=(x0, y0, x0 + side, y0)))
        plane = SketchPlane(
            tuple(float(v) for v in rng.uniform(-1, 1, size=3)),
            (float(rng.uniform(-3, 3) / 2), float(rng.uniform(-1.5, 1.5)),
             float(rng.uniform(-3, 3) / 2)))
        if rng.random() < 0.75:
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            ext = LinearExtrusion(tuple(float(v) for v in d), float(rng.uniform(0.2, 2.0)),
                                  back_length=float(rng.uniform(0, 0.5)) if rng.random() < 0.2 else 0.0,
                                  symmetric=bool(rng.random() < 0.2))
        else:
            ext = RotatedExtrusion(
                (x0 - 1.0, y0 - 1.0, 0.0), (0.0, 1.0, 0.0),
                float(rng.uniform(-0.5, 0.5)), float(rng.uniform(0.7, 3.0)))
        boolean = BooleanOp.NEW_BODY if pi == 0 else \
            BooleanOp(rng.choice(["join", "subtract", "intersect", "new_body"]))
        parts.append(Part(Sketch(plane, tuple(prims), tuple(cons)), ext, boolean))
    meta = DocumentMetadata(source=f"rand-{rng.integers(1e6)}", scale=float(rng.uniform(0.5, 2)))
    return Document(tuple(parts), meta)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
