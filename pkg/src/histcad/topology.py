"""Loop inference from flat primitive sets and outer/hole organization.

Loops are traced on the connectivity graph of primitive endpoints using
planar face tracing: at each vertex the walk continues along the
smallest-CCW-turn half-edge (curvature breaks tangential ties). Faces with
positive signed area are the loops; standalone circles are single-primitive
loops; primitives on no closed cycle are reported as dangling, never
silently dropped.

The loop dictionary assigns each loop (largest area first) as a hole of the
first already-registered outer that contains it, otherwise registers a new
outer - one level of nesting, matching the sort/contain/break control flow.
Names are deterministic: ``outer_k`` and ``hole_k_j`` in discovery order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import geom2d
from .errors import AmbiguousTopologyError
from .model import (Arc, Circle, EPS_GEOM_REL, Line, Primitive, Sketch,
                    sketch_sample_points)

_TWO_PI = geom2d.TWO_PI


@dataclass(frozen=True)
class LoopElement:
    primitive: Primitive
    reversed: bool = False

    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        p = self.primitive
        if isinstance(p, Circle):
            pt = (p.center[0] + p.radius, p.center[1])
            return pt, pt
        return (p.end, p.start) if self.reversed else (p.start, p.end)


@dataclass(frozen=True)
class Loop:
    """Closed simple cycle of primitives, normalized to CCW (positive area)."""

    elements: tuple[LoopElement, ...]
    area: float
    perimeter: float
    bbox: tuple[float, float, float, float]

    def primitive_ids(self) -> tuple[str, ...]:
        return tuple(e.primitive.id for e in self.elements)

    def discretize(self, per_turn: int = 64) -> np.ndarray:
        """Closed polyline (first point not repeated) tracing the loop CCW."""
        pts: list[tuple[float, float]] = []
        for el in self.elements:
            p = el.primitive
            tail, head = el.endpoints()
            if isinstance(p, Line):
                pts.append(tail)
            elif isinstance(p, Circle):
                n = max(per_turn, 8)
                for k in range(n):
                    ang = _TWO_PI * k / n
                    pts.append(geom2d.arc_point(p.center, p.radius, ang))
            else:
                c, r, a0, sweep, ccw = geom2d.arc_ccw_interval(p.start, p.mid, p.end)
                traversal_ccw = ccw != el.reversed
                n = max(2, int(math.ceil(sweep / (_TWO_PI / max(per_turn, 8)))))
                start_ang = a0 if traversal_ccw else a0 + sweep
                step = sweep / n if traversal_ccw else -sweep / n
                for k in range(n):
                    pts.append(geom2d.arc_point(c, r, start_ang + step * k))
        return np.asarray(pts, dtype=float)


@dataclass
class LoopsResult:
    loops: list[Loop]
    dangling: list[str]


@dataclass
class LoopGroup:
    outer: Loop
    holes: dict[str, Loop] = field(default_factory=dict)


LoopDict = dict[str, LoopGroup]


def _merge_vertices(points: list[tuple[float, float]], eps: float) -> list[int]:
    """Index map clustering points within eps (grid hash + neighbor bins)."""
    reps: list[tuple[float, float]] = []
    grid: dict[tuple[int, int], list[int]] = {}
    out = []
    inv = 1.0 / max(eps, 1e-300)
    for p in points:
        cell = (int(math.floor(p[0] * inv)), int(math.floor(p[1] * inv)))
        found = -1
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for ri in grid.get((cell[0] + dx, cell[1] + dy), ()):
                    if math.dist(reps[ri], p) <= eps:
                        found = ri
                        break
                if found >= 0:
                    break
            if found >= 0:
                break
        if found < 0:
            found = len(reps)
            reps.append(p)
            grid.setdefault(cell, []).append(found)
        out.append(found)
    return out


@dataclass
class _HalfEdge:
    prim_idx: int
    reversed: bool
    tail: int
    head: int
    angle: float
    curvature: float
    twin: int = -1


def _edge_geometry(p: Primitive):
    """(tail_angle_fwd, head_angle_bwd, curvature_fwd) of the traversal."""
    if isinstance(p, Line):
        ang = math.atan2(p.end[1] - p.start[1], p.end[0] - p.start[0])
        return ang, ang + math.pi, 0.0
    c, r, a0, sweep, ccw = geom2d.arc_ccw_interval(p.start, p.mid, p.end)
    ang_start = math.atan2(p.start[1] - c[1], p.start[0] - c[0])
    ang_end = math.atan2(p.end[1] - c[1], p.end[0] - c[0])
    if ccw:
        fwd = ang_start + 0.5 * math.pi
        bwd = ang_end - 0.5 * math.pi
        curv = 1.0 / r
    else:
        fwd = ang_start - 0.5 * math.pi
        bwd = ang_end + 0.5 * math.pi
        curv = -1.0 / r
    return fwd, bwd, curv


def _walk_area_perimeter(elements: Sequence[LoopElement]) -> tuple[float, float]:
    area = 0.0
    per = 0.0
    for el in elements:
        p = el.primitive
        if isinstance(p, Circle):
            area += math.pi * p.radius * p.radius
            per += _TWO_PI * p.radius
            continue
        tail, head = el.endpoints()
        area += 0.5 * geom2d.cross2(tail, head)
        if isinstance(p, Line):
            per += p.length()
        else:
            c, r, a0, sweep, ccw = geom2d.arc_ccw_interval(p.start, p.mid, p.end)
            traversal_ccw = ccw != el.reversed
            signed = sweep if traversal_ccw else -sweep
            area += geom2d.segment_arc_area(tail, head, c, r, signed)
            per += r * sweep
    return area, per


def _loop_bbox(elements: Sequence[LoopElement]) -> tuple[float, float, float, float]:
    boxes = []
    for el in elements:
        p = el.primitive
        if isinstance(p, Line):
            boxes.append((min(p.start[0], p.end[0]), min(p.start[1], p.end[1]),
                          max(p.start[0], p.end[0]), max(p.start[1], p.end[1])))
        elif isinstance(p, Circle):
            boxes.append((p.center[0] - p.radius, p.center[1] - p.radius,
                          p.center[0] + p.radius, p.center[1] + p.radius))
        else:
            c, r, a0, sweep, _ = geom2d.arc_ccw_interval(p.start, p.mid, p.end)
            boxes.append(geom2d.arc_bbox(c, r, a0, sweep))
    return geom2d.bbox_union(boxes)


def _make_loop(elements: list[LoopElement]) -> Loop:
    area, per = _walk_area_perimeter(elements)
    if area < 0:
        elements = [LoopElement(e.primitive, not e.reversed) for e in reversed(elements)]
        area = -area
    # deterministic starting element for stable discretization and naming
    start = min(range(len(elements)), key=lambda i: (elements[i].primitive.id, elements[i].reversed))
    elements = elements[start:] + elements[:start]
    return Loop(tuple(elements), area, per, _loop_bbox(elements))


def compute_loops(sketch: Sketch, eps: Optional[float] = None) -> LoopsResult:
    """Trace all closed loops; dangling primitives go to the warning list.

    Raises AMBIGUOUS_TOPOLOGY when a traced positive-area cycle is not
    simple (the smallest-turn rule admits no clean cycle cover).
    """
    if eps is None:
        pts = sketch_sample_points(sketch)
        extent = float(np.max(pts.max(axis=0) - pts.min(axis=0))) if len(pts) > 1 else 0.0
        eps = EPS_GEOM_REL * max(extent, 1e-30)

    loops: list[Loop] = []
    dangling: list[str] = []

    circles = [p for p in sketch.primitives if isinstance(p, Circle)]
    curves = [p for p in sketch.primitives if not isinstance(p, Circle)]
    for c in circles:
        loops.append(_make_loop([LoopElement(c, False)]))

    if curves:
        traced, dropped = _trace_faces(curves, eps)
        loops.extend(traced)
        dangling.extend(dropped)

    loops.sort(key=lambda lp: (-lp.area, lp.bbox))
    return LoopsResult(loops, sorted(dangling))


def _trace_faces(curves: list[Primitive], eps: float) -> tuple[list[Loop], list[str]]:
    endpoints = []
    for p in curves:
        endpoints.append(p.start)
        endpoints.append(p.end)
    vidx = _merge_vertices(endpoints, eps)

    # iterative degree-1 pruning: spurs cannot sit on any closed cycle
    active = [True] * len(curves)
    dangling: list[str] = []
    while True:
        degree: dict[int, int] = {}
        for i, p in enumerate(curves):
            if active[i]:
                degree[vidx[2 * i]] = degree.get(vidx[2 * i], 0) + 1
                degree[vidx[2 * i + 1]] = degree.get(vidx[2 * i + 1], 0) + 1
        removed = False
        for i, p in enumerate(curves):
            if active[i] and (degree.get(vidx[2 * i], 0) == 1 or degree.get(vidx[2 * i + 1], 0) == 1):
                active[i] = False
                dangling.append(p.id)
                removed = True
        if not removed:
            break

    halfedges: list[_HalfEdge] = []
    for i, p in enumerate(curves):
        if not active[i]:
            continue
        fwd_ang, bwd_ang, curv = _edge_geometry(p)
        h_f = _HalfEdge(i, False, vidx[2 * i], vidx[2 * i + 1], fwd_ang, curv)
        h_b = _HalfEdge(i, True, vidx[2 * i + 1], vidx[2 * i], bwd_ang, -curv)
        h_f.twin = len(halfedges) + 1
        h_b.twin = len(halfedges)
        halfedges.extend((h_f, h_b))

    if not halfedges:
        return [], dangling

    outgoing: dict[int, list[int]] = {}
    for hi, h in enumerate(halfedges):
        outgoing.setdefault(h.tail, []).append(hi)
    order_in_vertex: dict[int, int] = {}
    for v, hs in outgoing.items():
        hs.sort(key=lambda hi: (halfedges[hi].angle % _TWO_PI, halfedges[hi].curvature))
        for pos, hi in enumerate(hs):
            order_in_vertex[hi] = pos

    def next_halfedge(hi: int) -> int:
        twin = halfedges[hi].twin
        ring = outgoing[halfedges[twin].tail]
        return ring[(order_in_vertex[twin] - 1) % len(ring)]

    face_of = [-1] * len(halfedges)
    faces: list[list[int]] = []
    for start in range(len(halfedges)):
        if face_of[start] >= 0:
            continue
        fid = len(faces)
        walk = []
        hi = start
        while True:
            face_of[hi] = fid
            walk.append(hi)
            hi = next_halfedge(hi)
            if hi == start:
                break
            if face_of[hi] >= 0:
                raise AmbiguousTopologyError("face tracing collided with a visited half-edge")
        faces.append(walk)

    # a primitive whose two half-edges share a face is a bridge: no cycle
    bridge = set()
    for i in range(0, len(halfedges), 2):
        if face_of[i] == face_of[i + 1]:
            bridge.add(halfedges[i].prim_idx)
    dangling.extend(curves[i].id for i in sorted(bridge))

    loops = []
    for walk in faces:
        if any(halfedges[hi].prim_idx in bridge for hi in walk):
            continue
        elements = [LoopElement(curves[halfedges[hi].prim_idx], halfedges[hi].reversed)
                    for hi in walk]
        area, _ = _walk_area_perimeter(elements)
        if area <= 0:
            continue  # the outer face of a component traces clockwise
        tails = [halfedges[hi].tail for hi in walk]
        if len(set(tails)) != len(tails):
            raise AmbiguousTopologyError(
                "positive-area cycle revisits a vertex; no simple cycle cover")
        loop = _make_loop(elements)
        poly = loop.discretize(32)
        if not geom2d.polyline_is_simple(poly, 1e-12):
            raise AmbiguousTopologyError("traced loop self-intersects")
        loops.append(loop)
    return loops, dangling


# --- loop dictionary ---------------------------------------------------------------

def loop_contains(outer: Loop, inner: Loop, per_turn: int = 64) -> bool:
    """Strict geometric containment: all inner samples inside, no crossing."""
    po = outer.discretize(per_turn)
    pi = inner.discretize(per_turn)
    ob = outer.bbox
    ib = inner.bbox
    if ib[0] < ob[0] - 1e-12 or ib[1] < ob[1] - 1e-12 or ib[2] > ob[2] + 1e-12 or ib[3] > ob[3] + 1e-12:
        return False
    extent = max(ob[2] - ob[0], ob[3] - ob[1], 1e-30)
    eps = 1e-9 * extent
    inside = geom2d.points_in_polygon(pi, po)
    if not bool(np.all(inside)):
        return False
    return not geom2d.polyline_pair_intersects_vec(pi, po, eps)


def build_loop_dict(loops: Sequence[Loop]) -> LoopDict:
    """Assign each loop (descending area) to the first containing outer."""
    ordered = sorted(loops, key=lambda lp: (-abs(lp.area), lp.bbox))
    out: LoopDict = {}
    n_outer = 0
    hole_counts: dict[str, int] = {}
    outer_names: list[str] = []
    for loop in ordered:
        placed = False
        for name in outer_names:
            if loop_contains(out[name].outer, loop):
                j = hole_counts[name]
                hole_counts[name] += 1
                k = name.split("_")[1]
                out[name].holes[f"hole_{k}_{j}"] = loop
                placed = True
                break
        if not placed:
            name = f"outer_{n_outer}"
            n_outer += 1
            out[name] = LoopGroup(loop)
            hole_counts[name] = 0
            outer_names.append(name)
    return out
