"""Hierarchical face-loop sketches to flat primitive sets.

The pipeline decomposes loops into minimal segments (splitting collinear and
co-circular overlaps at shared breakpoints), removes duplicated edges by a
per-face then cross-face symmetric difference (a segment survives iff its
total multiplicity is odd), and finally migrates, augments, and prunes
constraints so the flat sketch keeps the source's relational intent.

Canonical segment keys quantize geometry at ``EPS_KEY_REL`` (1e-6) of the
sketch extent and are invariant under traversal-direction reversal. A full
circle and a partial arc never share a key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import geom2d
from .errors import DegenerateSegmentError, NonMinimalOperandsError
from .formats import HierarchicalSketch
from .model import (Anchor, Arc, Circle, Constraint, ConstraintKind,
                    ConstraintRef, Line, Primitive, Sketch, Vec2)

EPS_KEY_REL = 1e-6

_TWO_PI = geom2d.TWO_PI


@dataclass(frozen=True)
class MinimalSegment:
    """Atomic curve fragment: identical to or interior-disjoint from any peer.

    ``points`` holds traversal geometry: ``(p0, p1)`` for lines,
    ``(p_from, p_mid, p_to)`` for arcs, ``()`` for full circles. ``key`` is
    the quantized, direction-invariant canonical identity.
    """

    kind: str
    source: str
    points: tuple[Vec2, ...]
    key: tuple
    center: Optional[Vec2] = None
    radius: Optional[float] = None

    def to_primitive(self, pid: str) -> Primitive:
        if self.kind == "line":
            return Line(pid, self.points[0], self.points[1])
        if self.kind == "circle":
            return Circle(pid, self.center, self.radius)
        return Arc(pid, self.points[0], self.points[1], self.points[2])


class _Keyer:
    def __init__(self, eps: float):
        self.eps = max(eps, 1e-30)

    def q(self, v: float) -> int:
        return int(round(v / self.eps))

    def qp(self, p) -> tuple[int, int]:
        return (self.q(p[0]), self.q(p[1]))

    def line_key(self, p0, p1) -> tuple:
        a, b = sorted((self.qp(p0), self.qp(p1)))
        return ("line", a, b)

    def circle_key(self, center, radius) -> tuple:
        return ("circle", self.qp(center), self.q(radius))

    def arc_key(self, center, radius, p_from, p_mid, p_to) -> tuple:
        ends = tuple(sorted((self.qp(p_from), self.qp(p_to))))
        return ("arc", self.qp(center), self.q(radius), ends, self.qp(p_mid))


def _segment_points(seg: MinimalSegment) -> list[Vec2]:
    if seg.kind == "circle":
        cx, cy = seg.center
        r = seg.radius
        return [(cx - r, cy - r), (cx + r, cy + r)]
    return list(seg.points)


@dataclass
class Multiset:
    """Canonical key -> (representative segment, multiplicity >= 1)."""

    entries: dict[tuple, tuple[MinimalSegment, int]] = field(default_factory=dict)

    @classmethod
    def from_segments(cls, segs: Iterable[MinimalSegment]) -> "Multiset":
        m = cls()
        for s in segs:
            m.add(s)
        return m

    def add(self, seg: MinimalSegment, count: int = 1) -> None:
        if seg.key in self.entries:
            rep, n = self.entries[seg.key]
            self.entries[seg.key] = (rep, n + count)
        else:
            self.entries[seg.key] = (seg, count)

    def segments(self) -> list[MinimalSegment]:
        return [rep for rep, _ in self.entries.values()]

    def multiplicity(self, key: tuple) -> int:
        return self.entries.get(key, (None, 0))[1]

    def __len__(self) -> int:
        return len(self.entries)


# --- decomposition --------------------------------------------------------------

def _hier_extent(sketch: HierarchicalSketch) -> float:
    pts = []
    for f in sketch.faces:
        for lp in f.loops:
            for hc in lp.curves:
                pts.extend(_curve_sample_points(hc.curve))
    if not pts:
        return 0.0
    arr = np.asarray(pts, dtype=float)
    return float(np.max(arr.max(axis=0) - arr.min(axis=0)))


def _curve_sample_points(c: Primitive) -> list[Vec2]:
    if isinstance(c, Line):
        return [c.start, c.end]
    if isinstance(c, Circle):
        return [(c.center[0] - c.radius, c.center[1] - c.radius),
                (c.center[0] + c.radius, c.center[1] + c.radius)]
    return [c.start, c.mid, c.end]


class _LineCarrier:
    """Shared infinite-line parameterization so fragments from different
    source curves get bitwise-identical breakpoint coordinates."""

    def __init__(self, u: Vec2, base: Vec2):
        self.u = u
        self.base = base
        self.ts: list[float] = []

    def param(self, p) -> float:
        return (p[0] - self.base[0]) * self.u[0] + (p[1] - self.base[1]) * self.u[1]

    def point(self, t: float) -> Vec2:
        return (self.base[0] + t * self.u[0], self.base[1] + t * self.u[1])


def decompose(sketch: HierarchicalSketch) -> list[list[list[MinimalSegment]]]:
    """Split all loops into minimal segments; per-face, per-loop lists.

    Collinear line overlaps split at the union of endpoint parameters;
    co-circular arcs split at the union of angular endpoints. Raises
    DEGENERATE_SEGMENT for zero-length fragments.
    """
    extent = _hier_extent(sketch)
    eps = EPS_KEY_REL * max(extent, 1e-30)
    keyer = _Keyer(eps)

    records = []  # (face, loop, pos, curve_id, primitive, reversed)
    for fi, face in enumerate(sketch.faces):
        for li, loop in enumerate(face.loops):
            for ci, hc in enumerate(loop.curves):
                records.append((fi, li, ci, hc.curve.id, hc.curve, hc.reversed))

    line_groups: dict[tuple, _LineCarrier] = {}
    line_members: dict[int, tuple] = {}
    arc_groups: dict[tuple, dict] = {}
    arc_members: dict[int, tuple] = {}

    for idx, (_, _, _, cid, prim, _) in enumerate(records):
        if isinstance(prim, Line):
            if prim.length() <= eps:
                raise DegenerateSegmentError(f"zero-length line {cid!r}")
            u = geom2d.unit2((prim.end[0] - prim.start[0], prim.end[1] - prim.start[1]))
            if u[0] < -1e-12 or (abs(u[0]) <= 1e-12 and u[1] < 0):
                u = (-u[0], -u[1])
            offset = geom2d.cross2(u, prim.start)
            gkey = (round(u[0] / 1e-9), round(u[1] / 1e-9), keyer.q(offset))
            if gkey not in line_groups:
                base = (-offset * u[1], offset * u[0])  # foot of the origin on the carrier
                line_groups[gkey] = _LineCarrier(u, base)
            car = line_groups[gkey]
            car.ts.extend((car.param(prim.start), car.param(prim.end)))
            line_members[idx] = gkey
        elif isinstance(prim, Arc):
            try:
                center, radius, a0, sweep, ccw = geom2d.arc_ccw_interval(prim.start, prim.mid, prim.end)
            except ValueError:
                raise DegenerateSegmentError(f"arc {cid!r} has collinear points") from None
            if radius * sweep <= eps:
                raise DegenerateSegmentError(f"zero-length arc {cid!r}")
            gkey = (keyer.qp(center), keyer.q(radius))
            grp = arc_groups.setdefault(gkey, {"center": center, "radius": radius, "angles": []})
            grp["angles"].extend((a0, (a0 + sweep) % _TWO_PI))
            arc_members[idx] = (gkey, a0, sweep, ccw)
        elif isinstance(prim, Circle):
            if prim.radius <= eps:
                raise DegenerateSegmentError(f"zero-radius circle {cid!r}")

    # merge breakpoint parameters per carrier so all members share representatives
    line_breaks: dict[tuple, list[float]] = {}
    for gkey, car in line_groups.items():
        line_breaks[gkey] = _merge_values(sorted(car.ts), eps)
    arc_breaks: dict[tuple, list[float]] = {}
    for gkey, grp in arc_groups.items():
        tol = eps / max(grp["radius"], 1e-30)
        arc_breaks[gkey] = _merge_circular(sorted(a % _TWO_PI for a in grp["angles"]), tol)

    out: list[list[list[MinimalSegment]]] = []
    pos = 0
    for face in sketch.faces:
        face_out = []
        for loop in face.loops:
            loop_out: list[MinimalSegment] = []
            for hc in loop.curves:
                idx = pos
                pos += 1
                prim = hc.curve
                if isinstance(prim, Circle):
                    key = keyer.circle_key(prim.center, prim.radius)
                    loop_out.append(MinimalSegment("circle", prim.id, (), key,
                                                   center=prim.center, radius=prim.radius))
                elif isinstance(prim, Line):
                    gkey = line_members[idx]
                    car = line_groups[gkey]
                    loop_out.extend(_split_line(prim, hc.reversed, car, line_breaks[gkey], keyer))
                else:
                    gkey, a0, sweep, ccw = arc_members[idx]
                    grp = arc_groups[gkey]
                    loop_out.extend(_split_arc(prim, hc.reversed, grp["center"], grp["radius"],
                                               a0, sweep, ccw, arc_breaks[gkey], keyer, eps))
            face_out.append(loop_out)
        out.append(face_out)
    return out


def _merge_values(sorted_vals: Sequence[float], tol: float) -> list[float]:
    reps: list[float] = []
    for v in sorted_vals:
        if not reps or v - reps[-1] > tol:
            reps.append(v)
    return reps


def _merge_circular(sorted_vals: Sequence[float], tol: float) -> list[float]:
    reps = _merge_values(sorted_vals, tol)
    if len(reps) > 1 and (reps[0] + _TWO_PI) - reps[-1] <= tol:
        reps.pop()  # last wraps onto first
    return reps


def _nearest(reps: Sequence[float], v: float) -> float:
    return min(reps, key=lambda r: abs(r - v))


def _split_line(prim: Line, rev: bool, car: _LineCarrier, reps: list[float],
                keyer: _Keyer) -> list[MinimalSegment]:
    t0 = _nearest(reps, car.param(prim.start))
    t1 = _nearest(reps, car.param(prim.end))
    lo, hi = min(t0, t1), max(t0, t1)
    inner = [t for t in reps if lo < t < hi]
    stops = [lo, *inner, hi]
    pieces = []
    for a, b in zip(stops[:-1], stops[1:]):
        pa, pb = car.point(a), car.point(b)
        pieces.append(MinimalSegment("line", prim.id, (pa, pb), keyer.line_key(pa, pb)))
    if t0 > t1:
        pieces = [MinimalSegment("line", p.source, (p.points[1], p.points[0]), p.key)
                  for p in reversed(pieces)]
    if rev:
        pieces = [MinimalSegment("line", p.source, (p.points[1], p.points[0]), p.key)
                  for p in reversed(pieces)]
    return pieces


def _split_arc(prim: Arc, rev: bool, center, radius: float, a0: float, sweep: float,
               ccw: bool, reps: list[float], keyer: _Keyer, eps: float) -> list[MinimalSegment]:
    tol = eps / max(radius, 1e-30)
    start = _nearest_circular(reps, a0 % _TWO_PI)
    inner = sorted(
        ((r - start) % _TWO_PI, r) for r in reps
        if tol < (r - start) % _TWO_PI < sweep - tol
    )
    rel_stops = [0.0, *(rel for rel, _ in inner), sweep]
    pieces = []
    for ra, rb in zip(rel_stops[:-1], rel_stops[1:]):
        aa, ab = start + ra, start + rb
        p_from = geom2d.arc_point(center, radius, aa)
        p_to = geom2d.arc_point(center, radius, ab)
        p_mid = geom2d.arc_point(center, radius, (aa + ab) / 2.0)
        key = keyer.arc_key(center, radius, p_from, p_mid, p_to)
        pieces.append(MinimalSegment("arc", prim.id, (p_from, p_mid, p_to), key,
                                     center=center, radius=radius))
    traversal_ccw = ccw != rev
    if not traversal_ccw:
        pieces = [MinimalSegment("arc", p.source, (p.points[2], p.points[1], p.points[0]),
                                 p.key, center=p.center, radius=p.radius)
                  for p in reversed(pieces)]
    return pieces


def _nearest_circular(reps: Sequence[float], v: float) -> float:
    def dist(r):
        d = abs(r - v) % _TWO_PI
        return min(d, _TWO_PI - d)
    return min(reps, key=dist)


# --- symmetric difference ----------------------------------------------------------

def symmetric_difference(operands: Sequence[Multiset]) -> Multiset:
    """Keep a key iff its total multiplicity across operands is odd.

    Raises NON_MINIMAL_OPERANDS when two distinct keys' segments partially
    overlap (callers must decompose first).
    """
    _check_minimal(operands)
    totals: dict[tuple, tuple[MinimalSegment, int]] = {}
    for m in operands:
        for key, (rep, n) in m.entries.items():
            if key in totals:
                r0, n0 = totals[key]
                totals[key] = (r0, n0 + n)
            else:
                totals[key] = (rep, n)
    out = Multiset()
    for key, (rep, n) in totals.items():
        if n % 2 == 1:
            out.entries[key] = (rep, 1)
    return out


def _check_minimal(operands: Sequence[Multiset]) -> None:
    segs: dict[tuple, MinimalSegment] = {}
    for m in operands:
        for key, (rep, _) in m.entries.items():
            segs.setdefault(key, rep)
    lines = [s for s in segs.values() if s.kind == "line"]
    arcs = [s for s in segs.values() if s.kind == "arc"]
    pts = [p for s in segs.values() for p in _segment_points(s)]
    if not pts:
        return
    arr = np.asarray(pts, dtype=float)
    extent = float(np.max(arr.max(axis=0) - arr.min(axis=0))) if len(arr) > 1 else 0.0
    tol = EPS_KEY_REL * max(extent, 1e-30)

    by_carrier: dict[tuple, list] = {}
    for s in lines:
        p0, p1 = s.points
        u = geom2d.unit2((p1[0] - p0[0], p1[1] - p0[1]))
        if u[0] < -1e-12 or (abs(u[0]) <= 1e-12 and u[1] < 0):
            u = (-u[0], -u[1])
        offset = geom2d.cross2(u, p0)
        ckey = (round(u[0] / 1e-7), round(u[1] / 1e-7), int(round(offset / tol)))
        t0, t1 = geom2d.dot2(p0, u), geom2d.dot2(p1, u)
        by_carrier.setdefault(ckey, []).append((min(t0, t1), max(t0, t1), s.key))
    for group in by_carrier.values():
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                lo_a, hi_a, ka = group[i]
                lo_b, hi_b, kb = group[j]
                if ka != kb and min(hi_a, hi_b) - max(lo_a, lo_b) > tol:
                    raise NonMinimalOperandsError(
                        "line segments with distinct keys partially overlap")

    by_circle: dict[tuple, list] = {}
    for s in arcs:
        ckey = (int(round(s.center[0] / tol)), int(round(s.center[1] / tol)),
                int(round(s.radius / tol)))
        a_from = math.atan2(s.points[0][1] - s.center[1], s.points[0][0] - s.center[0])
        a_to = math.atan2(s.points[2][1] - s.center[1], s.points[2][0] - s.center[0])
        a_mid = math.atan2(s.points[1][1] - s.center[1], s.points[1][0] - s.center[0])
        # canonical CCW interval of the fragment
        if geom2d.angle_in_ccw_interval(a_mid, a_from, (a_to - a_from) % _TWO_PI or _TWO_PI):
            start, sweep = a_from, (a_to - a_from) % _TWO_PI or _TWO_PI
        else:
            start, sweep = a_to, (a_from - a_to) % _TWO_PI or _TWO_PI
        by_circle.setdefault(ckey, []).append((start, sweep, s.key, s.radius))
    for group in by_circle.values():
        ang_tol = tol / max(group[0][3], 1e-30)
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                sa, wa, ka, _ = group[i]
                sb, wb, kb, _ = group[j]
                if ka == kb:
                    continue
                ov = _circular_overlap(sa, wa, sb, wb)
                if ov > ang_tol and (ov < wa - ang_tol or ov < wb - ang_tol):
                    raise NonMinimalOperandsError(
                        "arc segments with distinct keys partially overlap")


def _circular_overlap(sa: float, wa: float, sb: float, wb: float) -> float:
    rel = (sb - sa) % _TWO_PI
    ov = 0.0
    # interval B may wrap; check both its start inside A and A's start inside B
    ov = max(ov, min(wa - rel, wb) if rel < wa else 0.0)
    rel2 = (sa - sb) % _TWO_PI
    ov = max(ov, min(wb - rel2, wa) if rel2 < wb else 0.0)
    return ov


# --- flattening -----------------------------------------------------------------

@dataclass
class FlattenResult:
    sketch: Sketch
    provenance: dict[str, tuple[str, ...]]  # source curve id -> surviving fragment ids
    source_primitives: dict[str, Primitive]
    dropped_sources: tuple[str, ...]


def flatten_sketch(sketch: HierarchicalSketch) -> FlattenResult:
    """Inner symmetric difference over each face's loops, outer across faces."""
    decomposed = decompose(sketch)
    face_sets = []
    for face_loops in decomposed:
        face_sets.append(symmetric_difference([Multiset.from_segments(loop) for loop in face_loops]))
    survived = symmetric_difference(face_sets) if face_sets else Multiset()

    counters = {"line": 0, "circle": 0, "arc": 0}
    prefix = {"line": "l", "circle": "c", "arc": "a"}
    prims: list[Primitive] = []
    provenance: dict[str, list[str]] = {}
    for seg in sorted(survived.segments(), key=lambda s: s.key):
        pid = f"{prefix[seg.kind]}{counters[seg.kind]}"
        counters[seg.kind] += 1
        prims.append(seg.to_primitive(pid))
        provenance.setdefault(seg.source, []).append(pid)

    source_prims: dict[str, Primitive] = {}
    for face in sketch.faces:
        for loop in face.loops:
            for hc in loop.curves:
                source_prims[hc.curve.id] = hc.curve
    dropped = tuple(sorted(set(source_prims) - set(provenance)))

    flat = Sketch(sketch.plane, tuple(prims), ())
    return FlattenResult(flat, {k: tuple(v) for k, v in provenance.items()},
                         source_prims, dropped)


# --- constraint migration -----------------------------------------------------------

def _fragment_anchor_for_point(frag: Primitive, point: Vec2, eps: float) -> Optional[Anchor]:
    if isinstance(frag, Circle):
        return None
    if math.dist(frag.start, point) <= eps:
        return Anchor.START
    if math.dist(frag.end, point) <= eps:
        return Anchor.END
    return None


def _map_ref(ref: ConstraintRef, result: FlattenResult, eps: float) -> list[ConstraintRef]:
    frag_ids = result.provenance.get(ref.primitive, ())
    if not frag_ids:
        return []
    prim_map = result.sketch.primitive_map()
    if ref.anchor in (Anchor.WHOLE, Anchor.CENTER):
        return [ConstraintRef(fid, ref.anchor) for fid in frag_ids]
    source = result.source_primitives[ref.primitive]
    if isinstance(source, Circle):
        return []
    point = source.start if ref.anchor == Anchor.START else source.end
    out = []
    for fid in frag_ids:
        anchor = _fragment_anchor_for_point(prim_map[fid], point, eps)
        if anchor is not None:
            out.append(ConstraintRef(fid, anchor))
    return out


def migrate_constraints(source_constraints: Sequence[Constraint], result: FlattenResult,
                        eps: Optional[float] = None) -> list[Constraint]:
    """Re-express each source constraint on every surviving fragment of its
    referents; constraints whose referents were removed by parity are dropped.

    Point-anchored references map only to the fragment that still carries the
    anchor point as an endpoint; whole/center references fan out to all
    fragments (cartesian product across referents).
    """
    if eps is None:
        pts = [p for prim in result.source_primitives.values() for p in _curve_sample_points(prim)]
        arr = np.asarray(pts, dtype=float) if pts else np.zeros((0, 2))
        extent = float(np.max(arr.max(axis=0) - arr.min(axis=0))) if len(arr) > 1 else 0.0
        eps = EPS_KEY_REL * max(extent, 1e-30)

    out: list[Constraint] = []
    seen: set = set()
    for c in source_constraints:
        mapped = [_map_ref(r, result, eps) for r in c.refs]
        if any(not m for m in mapped):
            continue
        combos = [[]]
        for options in mapped:
            combos = [prev + [opt] for prev in combos for opt in options]
        for refs in combos:
            if len(refs) == 2 and refs[0].primitive == refs[1].primitive:
                continue  # a constraint between a fragment and itself is vacuous
            pin = None if c.kind == ConstraintKind.FIX else c.pin
            cand = Constraint(c.kind, tuple(refs), pin)
            sig = _constraint_signature(cand)
            if sig not in seen:
                seen.add(sig)
                out.append(cand)
    return out


def _constraint_signature(c: Constraint):
    refs = tuple(sorted((r.primitive, r.anchor.value) for r in c.refs))
    return (c.kind.value, refs)


def add_auxiliary_constraints(sketch: Sketch, provenance: dict[str, tuple[str, ...]],
                              eps: Optional[float] = None) -> list[Constraint]:
    """Continuity constraints between fragments split from one source curve:
    coincident junction endpoints, parallel sibling line fragments, and equal
    radii for co-circular sibling arcs. Additions only, duplicates excluded."""
    if eps is None:
        pts = [p for prim in sketch.primitives for p in _curve_sample_points(prim)]
        arr = np.asarray(pts, dtype=float) if pts else np.zeros((0, 2))
        extent = float(np.max(arr.max(axis=0) - arr.min(axis=0))) if len(arr) > 1 else 0.0
        eps = EPS_KEY_REL * max(extent, 1e-30)

    prim_map = sketch.primitive_map()
    existing = {_constraint_signature(c) for c in sketch.constraints}
    out: list[Constraint] = []

    def emit(c: Constraint) -> None:
        sig = _constraint_signature(c)
        if sig not in existing:
            existing.add(sig)
            out.append(c)

    for source_id in sorted(provenance):
        frag_ids = [fid for fid in provenance[source_id] if fid in prim_map]
        if len(frag_ids) < 2:
            continue
        frags = [prim_map[fid] for fid in sorted(frag_ids)]
        for i in range(len(frags)):
            for j in range(i + 1, len(frags)):
                a, b = frags[i], frags[j]
                if isinstance(a, Circle) or isinstance(b, Circle):
                    continue
                for anch_a in (Anchor.START, Anchor.END):
                    pa = a.start if anch_a == Anchor.START else a.end
                    anch_b = _fragment_anchor_for_point(b, pa, eps)
                    if anch_b is not None:
                        emit(Constraint(ConstraintKind.COINCIDENT,
                                        (ConstraintRef(a.id, anch_a), ConstraintRef(b.id, anch_b))))
                if isinstance(a, Line) and isinstance(b, Line):
                    emit(Constraint(ConstraintKind.PARALLEL,
                                    (ConstraintRef(a.id), ConstraintRef(b.id))))
                elif isinstance(a, Arc) and isinstance(b, Arc):
                    emit(Constraint(ConstraintKind.EQUAL,
                                    (ConstraintRef(a.id), ConstraintRef(b.id))))
    return out


# --- pruning -----------------------------------------------------------------------

@dataclass(frozen=True)
class PruneEntry:
    constraint: Constraint
    reason: str


@dataclass
class PruneResult:
    sketch: Sketch
    removed: tuple[PruneEntry, ...]


_AXIS_KINDS = (ConstraintKind.HORIZONTAL, ConstraintKind.VERTICAL)


def prune_constraints(sketch: Sketch) -> PruneResult:
    """Remove duplicate, implied, and contradictory constraints.

    The closed rule table (anything outside it is kept):
      R1 exact duplicates (orientation-normalized refs);
      R2 Parallel(a,b) implied when a and b share an axis constraint;
      R3 Perpendicular(a,b) implied when a and b carry opposite axis constraints;
      R4 contradictions Horizontal(x)+Vertical(x) and Parallel(a,b)+Perpendicular(a,b):
         the constraint with the greater residual on current geometry is dropped.
    """
    from .constraints import constraint_residual  # deferred: avoids import cycle

    removed: list[PruneEntry] = []
    kept: list[Constraint] = []
    seen: set = set()
    for c in sketch.constraints:
        sig = _constraint_signature(c)
        if sig in seen:
            removed.append(PruneEntry(c, "duplicate"))
        else:
            seen.add(sig)
            kept.append(c)

    axis_of: dict[str, set[ConstraintKind]] = {}
    for c in kept:
        if c.kind in _AXIS_KINDS:
            axis_of.setdefault(c.refs[0].primitive, set()).add(c.kind)

    def residual_mag(c: Constraint) -> float:
        try:
            return float(np.max(np.abs(constraint_residual(c, sketch))))
        except Exception:
            return math.inf

    result: list[Constraint] = []
    pair_kinds: dict[tuple, dict[ConstraintKind, Constraint]] = {}
    for c in kept:
        if c.kind in (ConstraintKind.PARALLEL, ConstraintKind.PERPENDICULAR):
            pair = tuple(sorted(c.ref_ids()))
            pair_kinds.setdefault(pair, {})[c.kind] = c

    dropped_ids = set()
    for pair, kinds in pair_kinds.items():
        if ConstraintKind.PARALLEL in kinds and ConstraintKind.PERPENDICULAR in kinds:
            ca, cb = kinds[ConstraintKind.PARALLEL], kinds[ConstraintKind.PERPENDICULAR]
            worse = ca if residual_mag(ca) >= residual_mag(cb) else cb
            dropped_ids.add(id(worse))
            removed.append(PruneEntry(worse, "contradicts its counterpart on the same pair"))

    hv_by_prim: dict[str, dict[ConstraintKind, Constraint]] = {}
    for c in kept:
        if c.kind in _AXIS_KINDS:
            hv_by_prim.setdefault(c.refs[0].primitive, {})[c.kind] = c
    for pid, kinds in hv_by_prim.items():
        if len(kinds) == 2:
            ch, cv = kinds[ConstraintKind.HORIZONTAL], kinds[ConstraintKind.VERTICAL]
            worse = ch if residual_mag(ch) >= residual_mag(cv) else cv
            dropped_ids.add(id(worse))
            removed.append(PruneEntry(worse, "horizontal and vertical on one line"))

    for c in kept:
        if id(c) in dropped_ids:
            continue
        if c.kind == ConstraintKind.PARALLEL:
            a, b = c.ref_ids()
            shared = axis_of.get(a, set()) & axis_of.get(b, set())
            if shared:
                removed.append(PruneEntry(c, "implied by matching axis constraints"))
                continue
        if c.kind == ConstraintKind.PERPENDICULAR:
            a, b = c.ref_ids()
            ka, kb = axis_of.get(a, set()), axis_of.get(b, set())
            if (ConstraintKind.HORIZONTAL in ka and ConstraintKind.VERTICAL in kb) or \
               (ConstraintKind.VERTICAL in ka and ConstraintKind.HORIZONTAL in kb):
                removed.append(PruneEntry(c, "implied by opposite axis constraints"))
                continue
        result.append(c)

    new_sketch = Sketch(sketch.plane, sketch.primitives, tuple(result))
    return PruneResult(new_sketch, tuple(removed))
