"""Domain types of the flat, constraint-aware modeling sequence.

A :class:`Document` is an ordered list of :class:`Part` objects; each part is
one sketch (plane + unordered primitives + constraints), one extrusion, and
one Boolean operation. All types are immutable; transformations construct new
values, so instances are safe to share across workers.

Geometric degeneracy checks use ``EPS_GEOM_REL`` (1e-8) scaled by the model's
global extent so validation is invariant under uniform re-scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Union

import numpy as np

from . import geom2d
from .errors import DegenerateModelError

# relative tolerance for degeneracy tests, scaled by model extent
EPS_GEOM_REL = 1e-8
# orthonormality tolerance for derived rotation matrices and unit vectors
EPS_ORTHO = 1e-9

Vec2 = tuple[float, float]
Vec3 = tuple[float, float, float]


def _v2(p) -> Vec2:
    return (float(p[0]), float(p[1]))


def _v3(p) -> Vec3:
    return (float(p[0]), float(p[1]), float(p[2]))


def rotation_xyz(angles: Vec3) -> np.ndarray:
    """Rotation matrix for intrinsic X-Y-Z Euler angles (radians)."""
    ax, ay, az = angles
    cx, sx = math.cos(ax), math.sin(ax)
    cy, sy = math.cos(ay), math.sin(ay)
    cz, sz = math.cos(az), math.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rx @ ry @ rz


@dataclass(frozen=True)
class SketchPlane:
    """Sketch plane placement: world translation plus intrinsic X-Y-Z Euler angles."""

    translation: Vec3 = (0.0, 0.0, 0.0)
    euler_angles: Vec3 = (0.0, 0.0, 0.0)

    def rotation(self) -> np.ndarray:
        return rotation_xyz(self.euler_angles)

    def normal(self) -> np.ndarray:
        return self.rotation()[:, 2]

    def to_world(self, pts2d: np.ndarray) -> np.ndarray:
        """Map (n, 2) sketch-plane coordinates to (n, 3) world points."""
        pts2d = np.atleast_2d(np.asarray(pts2d, dtype=float))
        r = self.rotation()
        return pts2d @ np.stack([r[:, 0], r[:, 1]]) + np.asarray(self.translation)

    def to_world_vec(self, vec2d) -> np.ndarray:
        r = self.rotation()
        return r[:, 0] * float(vec2d[0]) + r[:, 1] * float(vec2d[1])

    def to_plane(self, pts3d: np.ndarray) -> np.ndarray:
        """Project (n, 3) world points into (n, 2) plane coordinates."""
        pts3d = np.atleast_2d(np.asarray(pts3d, dtype=float))
        r = self.rotation()
        rel = pts3d - np.asarray(self.translation)
        return np.stack([rel @ r[:, 0], rel @ r[:, 1]], axis=1)


@dataclass(frozen=True)
class Line:
    id: str
    start: Vec2
    end: Vec2

    @property
    def kind(self) -> str:
        return "line"

    def length(self) -> float:
        return math.dist(self.start, self.end)

    def direction(self) -> Vec2:
        return geom2d.unit2((self.end[0] - self.start[0], self.end[1] - self.start[1]))


@dataclass(frozen=True)
class Circle:
    id: str
    center: Vec2
    radius: float

    @property
    def kind(self) -> str:
        return "circle"


@dataclass(frozen=True)
class Arc:
    id: str
    start: Vec2
    mid: Vec2
    end: Vec2

    @property
    def kind(self) -> str:
        return "arc"

    def circumcircle(self) -> tuple[Vec2, float]:
        return geom2d.circumcircle(self.start, self.mid, self.end)


Primitive = Union[Line, Circle, Arc]


class Anchor(str, Enum):
    START = "start"
    END = "end"
    CENTER = "center"
    WHOLE = "whole"


class ConstraintKind(str, Enum):
    COINCIDENT = "coincident"
    PARALLEL = "parallel"
    PERPENDICULAR = "perpendicular"
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    TANGENT = "tangent"
    EQUAL = "equal"
    CONCENTRIC = "concentric"
    FIX = "fix"
    NORMAL = "normal"


# arity of each constraint kind
UNARY_KINDS = frozenset({ConstraintKind.HORIZONTAL, ConstraintKind.VERTICAL, ConstraintKind.FIX})

# anchors that denote a point on a primitive
POINT_ANCHORS = frozenset({Anchor.START, Anchor.END, Anchor.CENTER})


@dataclass(frozen=True)
class ConstraintRef:
    """Reference to a primitive, optionally qualified by an anchor point."""

    primitive: str
    anchor: Anchor = Anchor.WHOLE


@dataclass(frozen=True)
class Constraint:
    """One of the ten relational constraint kinds over 1-2 primitive refs.

    ``pin`` stores the pinned parameter snapshot for FIX constraints; when
    absent the primitive's current parameters act as the pinned values.
    """

    kind: ConstraintKind
    refs: tuple[ConstraintRef, ...]
    pin: Optional[tuple[float, ...]] = None

    def ref_ids(self) -> tuple[str, ...]:
        return tuple(r.primitive for r in self.refs)


@dataclass(frozen=True)
class LinearExtrusion:
    """Prism extrusion along a unit direction.

    ``length`` is measured along the direction vector. A nonzero
    ``back_length`` extrudes additionally in the opposite direction;
    ``symmetric`` splits ``length`` evenly about the sketch plane instead.
    """

    direction: Vec3
    length: float
    back_length: float = 0.0
    symmetric: bool = False

    @property
    def mode(self) -> str:
        return "linear"


@dataclass(frozen=True)
class RotatedExtrusion:
    """Revolve about a world-space axis between start and end angles (radians)."""

    axis_point: Vec3
    axis_dir: Vec3
    start_angle: float
    end_angle: float

    @property
    def mode(self) -> str:
        return "rotated"

    @property
    def sweep(self) -> float:
        return self.end_angle - self.start_angle


Extrusion = Union[LinearExtrusion, RotatedExtrusion]


class BooleanOp(str, Enum):
    NEW_BODY = "new_body"
    JOIN = "join"
    SUBTRACT = "subtract"
    INTERSECT = "intersect"


@dataclass(frozen=True)
class Sketch:
    """Flat sketch: a plane plus unordered primitive and constraint sets.

    Primitives and constraints are stored as tuples for immutability, but
    their order carries no meaning; canonicalization defines the one
    normative ordering.
    """

    plane: SketchPlane
    primitives: tuple[Primitive, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    def primitive_map(self) -> dict[str, Primitive]:
        return {p.id: p for p in self.primitives}

    def get(self, pid: str) -> Primitive:
        for p in self.primitives:
            if p.id == pid:
                return p
        raise KeyError(pid)


@dataclass(frozen=True)
class Part:
    sketch: Sketch
    extrusion: Extrusion
    boolean: BooleanOp = BooleanOp.NEW_BODY


@dataclass(frozen=True)
class DocumentMetadata:
    source: str = ""
    scale: float = 1.0


@dataclass(frozen=True)
class Document:
    parts: tuple[Part, ...]
    metadata: DocumentMetadata = field(default_factory=DocumentMetadata)


# --- validation -------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    path: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}


def sketch_sample_points(sketch: Sketch) -> np.ndarray:
    """Representative 2D points covering all primitives (exact for bboxes)."""
    pts: list[Vec2] = []
    for p in sketch.primitives:
        if isinstance(p, Line):
            pts.extend((p.start, p.end))
        elif isinstance(p, Circle):
            cx, cy = p.center
            r = p.radius
            pts.extend([(cx - r, cy - r), (cx + r, cy + r), (cx - r, cy + r), (cx + r, cy - r)])
        elif isinstance(p, Arc):
            pts.extend((p.start, p.mid, p.end))
            try:
                c, r, a0, sweep, _ = geom2d.arc_ccw_interval(p.start, p.mid, p.end)
            except ValueError:
                continue
            x0, y0, x1, y1 = geom2d.arc_bbox(c, r, a0, sweep)
            pts.extend([(x0, y0), (x1, y1)])
    if not pts:
        return np.zeros((0, 2))
    return np.asarray(pts, dtype=float)


def _part_world_points(part: Part) -> np.ndarray:
    pts2d = sketch_sample_points(part.sketch)
    if len(pts2d) == 0:
        return np.zeros((0, 3))
    base = part.sketch.plane.to_world(pts2d)
    ext = part.extrusion
    if isinstance(ext, LinearExtrusion):
        d = np.asarray(ext.direction, dtype=float)
        fwd, back = _linear_offsets(ext)
        return np.concatenate([base + d * back, base + d * fwd])
    # rotated: sample the sweep coarsely; exact extremes are not needed here
    axis_p = np.asarray(ext.axis_point, dtype=float)
    axis_d = np.asarray(ext.axis_dir, dtype=float)
    n = np.linalg.norm(axis_d)
    if n == 0:
        return base
    axis_d = axis_d / n
    angles = np.linspace(0.0, ext.sweep, 33)
    rel = base - axis_p
    axial = rel @ axis_d
    radial = rel - np.outer(axial, axis_d)
    out = []
    # rotate radial components about the axis via Rodrigues' formula
    for ang in angles:
        c, s = math.cos(ang), math.sin(ang)
        rot = radial * c + np.cross(axis_d, radial) * s
        out.append(axis_p + np.outer(axial, axis_d) + rot)
    return np.concatenate(out)


def _linear_offsets(ext: LinearExtrusion) -> tuple[float, float]:
    """(forward, backward) signed distances along the direction vector."""
    if ext.symmetric:
        return ext.length / 2.0, -ext.length / 2.0
    return ext.length, -ext.back_length


def document_bounds(doc: Document) -> tuple[np.ndarray, np.ndarray]:
    pts = [p for part in doc.parts for p in [_part_world_points(part)] if len(p)]
    if not pts:
        return np.zeros(3), np.zeros(3)
    allp = np.concatenate(pts)
    return allp.min(axis=0), allp.max(axis=0)


def model_extent(doc: Document) -> float:
    """Longest edge of the global axis-aligned bounding box (floor 0)."""
    lo, hi = document_bounds(doc)
    return float(np.max(hi - lo)) if len(doc.parts) else 0.0


def eps_geom(doc_or_extent) -> float:
    extent = doc_or_extent if isinstance(doc_or_extent, (int, float)) else model_extent(doc_or_extent)
    return EPS_GEOM_REL * max(float(extent), 1e-30)


_LEGAL_ANCHORS: dict[type, frozenset[Anchor]] = {
    Line: frozenset({Anchor.START, Anchor.END, Anchor.WHOLE}),
    Circle: frozenset({Anchor.CENTER, Anchor.WHOLE}),
    Arc: frozenset({Anchor.START, Anchor.END, Anchor.CENTER, Anchor.WHOLE}),
}


def _check_constraint(c: Constraint, prims: dict[str, Primitive], path: str,
                      out: list[Violation]) -> None:
    want = 1 if c.kind in UNARY_KINDS else 2
    if len(c.refs) != want:
        out.append(Violation("BAD_ARITY", path,
                             f"{c.kind.value} takes {want} reference(s), got {len(c.refs)}"))
        return
    resolved = []
    for r in c.refs:
        prim = prims.get(r.primitive)
        if prim is None:
            out.append(Violation("DANGLING_REF", path,
                                 f"constraint references unknown primitive {r.primitive!r}"))
            return
        if r.anchor not in _LEGAL_ANCHORS[type(prim)]:
            out.append(Violation("BAD_ANCHOR", path,
                                 f"anchor {r.anchor.value} is not valid for a {prim.kind}"))
            return
        resolved.append((r, prim))

    kinds = tuple(p.kind for _, p in resolved)
    anchors = tuple(r.anchor for r, _ in resolved)

    def fail(msg: str) -> None:
        out.append(Violation("BAD_REF_KIND", path, f"{c.kind.value}: {msg}"))

    k = c.kind
    if k == ConstraintKind.COINCIDENT:
        if any(a == Anchor.WHOLE for a in anchors):
            fail("requires point anchors on both references")
    elif k in (ConstraintKind.PARALLEL, ConstraintKind.PERPENDICULAR):
        if kinds != ("line", "line"):
            fail("requires two line references")
    elif k in (ConstraintKind.HORIZONTAL, ConstraintKind.VERTICAL):
        if kinds[0] != "line":
            fail("requires a line reference")
    elif k == ConstraintKind.TANGENT:
        curved = sum(1 for kk in kinds if kk in ("circle", "arc"))
        if curved == 0:
            fail("requires at least one circle or arc reference")
    elif k == ConstraintKind.EQUAL:
        a, b = kinds
        same_family = (a == "line" and b == "line") or (a in ("circle", "arc") and b in ("circle", "arc"))
        if not same_family:
            fail("requires two lines or two circular primitives")
    elif k == ConstraintKind.CONCENTRIC:
        if any(kk == "line" for kk in kinds):
            fail("requires two circular primitives")
    elif k == ConstraintKind.NORMAL:
        if sorted(kinds) not in (["circle", "line"], ["arc", "line"]):
            fail("requires one line and one circular primitive")
    if k == ConstraintKind.FIX and c.pin is not None:
        prim = resolved[0][1]
        from .constraints import primitive_params  # local import avoids a cycle
        if len(c.pin) != len(primitive_params(prim)):
            out.append(Violation("BAD_PIN", path,
                                 "fix pin length does not match primitive parameter count"))


def validate_document(doc: Document) -> ValidationReport:
    """Check every type invariant; violations are data, not failures."""
    out: list[Violation] = []
    if not doc.parts:
        out.append(Violation("EMPTY_DOCUMENT", "parts", "document has no parts"))
        return ValidationReport(tuple(out))

    extent = model_extent(doc)
    eps = eps_geom(extent)

    if doc.parts[0].boolean != BooleanOp.NEW_BODY:
        out.append(Violation("FIRST_OP_NOT_NEW_BODY", "parts[0].boolean",
                             "first part must use the new_body operation"))

    for i, part in enumerate(doc.parts):
        base = f"parts[{i}]"
        plane = part.sketch.plane
        for j, ang in enumerate(plane.euler_angles):
            if not math.isfinite(ang):
                out.append(Violation("ANGLE_NOT_FINITE", f"{base}.sketch.plane", "euler angle not finite"))
            elif not (-math.pi < ang <= math.pi + 1e-15):
                out.append(Violation("EULER_ANGLE_RANGE", f"{base}.sketch.plane",
                                     f"euler angle {ang} outside (-pi, pi]"))
        r = plane.rotation()
        if np.max(np.abs(r @ r.T - np.eye(3))) > EPS_ORTHO:
            out.append(Violation("ROTATION_NOT_ORTHONORMAL", f"{base}.sketch.plane",
                                 "derived rotation matrix is not orthonormal"))

        seen: set[str] = set()
        prims = {}
        for p in part.sketch.primitives:
            ppath = f"{base}.sketch.primitives[{p.id}]"
            if p.id in seen:
                out.append(Violation("DUPLICATE_ID", ppath, f"duplicate primitive id {p.id!r}"))
            seen.add(p.id)
            prims[p.id] = p
            if isinstance(p, Line):
                if p.length() <= eps:
                    out.append(Violation("ZERO_LENGTH_LINE", ppath, "line endpoints coincide"))
            elif isinstance(p, Circle):
                if p.radius <= eps:
                    out.append(Violation("RADIUS_NONPOSITIVE", ppath, "circle radius must be positive"))
            elif isinstance(p, Arc):
                try:
                    _, rad = p.circumcircle()
                    if rad >= 1.0 / eps:
                        raise ValueError
                except ValueError:
                    out.append(Violation("ARC_COLLINEAR", ppath,
                                         "arc points are collinear (no circumscribed circle)"))

        for j, c in enumerate(part.sketch.constraints):
            _check_constraint(c, prims, f"{base}.sketch.constraints[{j}]", out)

        ext = part.extrusion
        epath = f"{base}.extrusion"
        if isinstance(ext, LinearExtrusion):
            if abs(np.linalg.norm(ext.direction) - 1.0) > EPS_ORTHO:
                out.append(Violation("DIRECTION_NOT_UNIT", epath, "extrusion direction is not unit-norm"))
            if ext.length <= 0:
                out.append(Violation("LENGTH_NONPOSITIVE", epath, "extrusion length must be positive"))
            if ext.back_length < 0:
                out.append(Violation("LENGTH_NONPOSITIVE", epath, "back length must be nonnegative"))
        else:
            if abs(np.linalg.norm(ext.axis_dir) - 1.0) > EPS_ORTHO:
                out.append(Violation("DIRECTION_NOT_UNIT", epath, "rotation axis direction is not unit-norm"))
            if not (0.0 < ext.sweep <= geom2d.TWO_PI + 1e-12):
                out.append(Violation("ANGLE_RANGE", epath,
                                     "end_angle - start_angle must lie in (0, 2*pi]"))
    return ValidationReport(tuple(out))


# --- normalization ------------------------------------------------------------

def _scale_primitive(p: Primitive, s: float) -> Primitive:
    if isinstance(p, Line):
        return Line(p.id, (p.start[0] * s, p.start[1] * s), (p.end[0] * s, p.end[1] * s))
    if isinstance(p, Circle):
        return Circle(p.id, (p.center[0] * s, p.center[1] * s), p.radius * s)
    return Arc(p.id, (p.start[0] * s, p.start[1] * s), (p.mid[0] * s, p.mid[1] * s),
               (p.end[0] * s, p.end[1] * s))


def _scale_constraint(c: Constraint, s: float) -> Constraint:
    if c.kind == ConstraintKind.FIX and c.pin is not None:
        return replace(c, pin=tuple(v * s for v in c.pin))
    return c


def normalize_document(doc: Document, target_extent: float) -> Document:
    """Uniformly scale so the global bounding box's longest edge equals the target.

    Angles are untouched; the applied factor accumulates in ``metadata.scale``.
    """
    if target_extent <= 0:
        raise ValueError("target_extent must be positive")
    extent = model_extent(doc)
    if extent <= 0:
        raise DegenerateModelError("global bounding box has zero extent")
    s = target_extent / extent
    parts = []
    for part in doc.parts:
        sk = part.sketch
        plane = SketchPlane(tuple(v * s for v in sk.plane.translation), sk.plane.euler_angles)
        prims = tuple(_scale_primitive(p, s) for p in sk.primitives)
        cons = tuple(_scale_constraint(c, s) for c in sk.constraints)
        ext = part.extrusion
        if isinstance(ext, LinearExtrusion):
            ext = replace(ext, length=ext.length * s, back_length=ext.back_length * s)
        else:
            ext = replace(ext, axis_point=tuple(v * s for v in ext.axis_point))
        parts.append(Part(Sketch(plane, prims, cons), ext, part.boolean))
    meta = DocumentMetadata(doc.metadata.source, doc.metadata.scale * s)
    return Document(tuple(parts), meta)
