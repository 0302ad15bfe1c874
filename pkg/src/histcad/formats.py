"""Canonical on-disk format (`.hcad`) and legacy hierarchical import (`.hier`).

The canonical format is a UTF-8 JSON tree versioned by ``format_version: 1``.
Canonicalization sorts primitives by (kind, parameter tuple) and constraints
by (kind, sorted refs), and rounds every numeric field to 9 significant
digits; numbers are then rendered with Python's shortest-round-trip ``repr``,
so ``parse(serialize(doc))`` reproduces ``canonicalize(doc)`` bit-exactly and
golden files are byte-stable across platforms.

Legacy hierarchical files carry explicit face-loop structure over the
line/arc/circle subset; splines are rejected rather than approximated. Both
schemas are documented in ``docs/format.md``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Any, Optional

import numpy as np

from . import geom2d
from .errors import (DocumentSyntaxError, DuplicateIdError, OpenLoopError,
                     SchemaError, UnsupportedCurveError)
from .model import (Anchor, Arc, BooleanOp, Circle, Constraint, ConstraintKind,
                    ConstraintRef, Document, DocumentMetadata, EPS_GEOM_REL,
                    Extrusion, Line, LinearExtrusion, Part, Primitive,
                    RotatedExtrusion, Sketch, SketchPlane, model_extent)

FORMAT_VERSION = 1

_KIND_RANK = {"line": 0, "circle": 1, "arc": 2}


def canonical_number(x: float) -> float:
    """Round to 9 significant digits; idempotent, and -0.0 collapses to 0.0."""
    v = float(f"{float(x):.9g}")
    return 0.0 if v == 0.0 else v


def format_number(x: float) -> str:
    """Shortest-round-trip decimal rendering of the canonical value."""
    return repr(canonical_number(x))


def _cv2(p) -> tuple[float, float]:
    return (canonical_number(p[0]), canonical_number(p[1]))


def _cv3(p) -> tuple[float, float, float]:
    return (canonical_number(p[0]), canonical_number(p[1]), canonical_number(p[2]))


def _canonical_primitive(p: Primitive) -> Primitive:
    if isinstance(p, Line):
        return Line(p.id, _cv2(p.start), _cv2(p.end))
    if isinstance(p, Circle):
        return Circle(p.id, _cv2(p.center), canonical_number(p.radius))
    return Arc(p.id, _cv2(p.start), _cv2(p.mid), _cv2(p.end))


def _primitive_sort_key(p: Primitive):
    if isinstance(p, Line):
        params = (*p.start, *p.end)
    elif isinstance(p, Circle):
        params = (*p.center, p.radius)
    else:
        params = (*p.start, *p.mid, *p.end)
    return (_KIND_RANK[p.kind], params, p.id)


def _canonical_constraint(c: Constraint) -> Constraint:
    refs = tuple(sorted(c.refs, key=lambda r: (r.primitive, r.anchor.value)))
    pin = tuple(canonical_number(v) for v in c.pin) if c.pin is not None else None
    return Constraint(c.kind, refs, pin)


def _constraint_sort_key(c: Constraint):
    return (c.kind.value, tuple((r.primitive, r.anchor.value) for r in c.refs))


def canonicalize(doc: Document) -> Document:
    """Normalize ordering and numeric precision; idempotent."""
    parts = []
    for part in doc.parts:
        sk = part.sketch
        plane = SketchPlane(_cv3(sk.plane.translation), _cv3(sk.plane.euler_angles))
        prims = tuple(sorted((_canonical_primitive(p) for p in sk.primitives),
                             key=_primitive_sort_key))
        cons = tuple(sorted((_canonical_constraint(c) for c in sk.constraints),
                            key=_constraint_sort_key))
        ext = part.extrusion
        if isinstance(ext, LinearExtrusion):
            ext = LinearExtrusion(_cv3(ext.direction), canonical_number(ext.length),
                                  canonical_number(ext.back_length), ext.symmetric)
        else:
            ext = RotatedExtrusion(_cv3(ext.axis_point), _cv3(ext.axis_dir),
                                   canonical_number(ext.start_angle),
                                   canonical_number(ext.end_angle))
        parts.append(Part(Sketch(plane, prims, cons), ext, part.boolean))
    meta = DocumentMetadata(doc.metadata.source, canonical_number(doc.metadata.scale))
    return Document(tuple(parts), meta)


# --- serialization -----------------------------------------------------------

def _primitive_to_obj(p: Primitive) -> dict:
    if isinstance(p, Line):
        return {"id": p.id, "kind": "line", "start": list(p.start), "end": list(p.end)}
    if isinstance(p, Circle):
        return {"id": p.id, "kind": "circle", "center": list(p.center), "radius": p.radius}
    return {"id": p.id, "kind": "arc", "start": list(p.start), "mid": list(p.mid), "end": list(p.end)}


def _constraint_to_obj(c: Constraint) -> dict:
    obj: dict[str, Any] = {
        "kind": c.kind.value,
        "refs": [{"ref": r.primitive, "anchor": r.anchor.value} for r in c.refs],
    }
    if c.pin is not None:
        obj["pin"] = list(c.pin)
    return obj


def _extrusion_to_obj(e: Extrusion) -> dict:
    if isinstance(e, LinearExtrusion):
        obj: dict[str, Any] = {"mode": "linear", "direction": list(e.direction), "length": e.length}
        if e.back_length:
            obj["back_length"] = e.back_length
        if e.symmetric:
            obj["symmetric"] = True
        return obj
    return {"mode": "rotated", "axis_point": list(e.axis_point), "axis_dir": list(e.axis_dir),
            "start_angle": e.start_angle, "end_angle": e.end_angle}


def document_to_obj(doc: Document) -> dict:
    """Plain-JSON tree of the canonical form (used by serializer and service)."""
    cdoc = canonicalize(doc)
    return {
        "format_version": FORMAT_VERSION,
        "metadata": {"source": cdoc.metadata.source, "scale": cdoc.metadata.scale},
        "parts": [
            {
                "sketch": {
                    "plane": {"translation": list(part.sketch.plane.translation),
                              "euler_angles": list(part.sketch.plane.euler_angles)},
                    "primitives": [_primitive_to_obj(p) for p in part.sketch.primitives],
                    "constraints": [_constraint_to_obj(c) for c in part.sketch.constraints],
                },
                "extrusion": _extrusion_to_obj(part.extrusion),
                "boolean": part.boolean.value,
            }
            for part in cdoc.parts
        ],
    }


def serialize_document(doc: Document, quantize_grid: Optional[int] = None) -> str:
    """Canonical text form. ``quantize_grid`` optionally snaps coordinates to
    ``extent / quantize_grid`` at serialization time only (export quantizer)."""
    if quantize_grid is not None:
        doc = _quantize(doc, quantize_grid)
    return json.dumps(document_to_obj(doc), indent=2, allow_nan=False) + "\n"


def _quantize(doc: Document, grid: int) -> Document:
    if grid <= 0:
        raise ValueError("quantize_grid must be positive")
    extent = model_extent(doc)
    if extent <= 0:
        return doc
    step = extent / grid

    def q(v: float) -> float:
        return round(v / step) * step

    def qp(p):
        return tuple(q(v) for v in p)

    parts = []
    for part in doc.parts:
        prims = []
        for p in part.sketch.primitives:
            if isinstance(p, Line):
                prims.append(Line(p.id, qp(p.start), qp(p.end)))
            elif isinstance(p, Circle):
                prims.append(Circle(p.id, qp(p.center), max(q(p.radius), step)))
            else:
                prims.append(Arc(p.id, qp(p.start), qp(p.mid), qp(p.end)))
        sk = replace(part.sketch, primitives=tuple(prims))
        parts.append(replace(part, sketch=sk))
    return Document(tuple(parts), doc.metadata)


# --- parsing -------------------------------------------------------------------

class _Reader:
    """Schema walker: explicit type checks with field-path error reporting."""

    def __init__(self, strict: bool, warnings: Optional[list[str]]):
        self.strict = strict
        self.warnings = warnings if warnings is not None else []

    def err(self, path: str, msg: str) -> SchemaError:
        return SchemaError(f"{msg} at {path or '<root>'}", path=path)

    def obj(self, v, path: str, known: set[str], required: set[str]) -> dict:
        if not isinstance(v, dict):
            raise self.err(path, "expected an object")
        unknown = set(v) - known
        if unknown:
            msg = f"unknown field(s) {sorted(unknown)}"
            if self.strict:
                raise self.err(path, msg)
            self.warnings.append(f"{path}: {msg}")
        missing = required - set(v)
        if missing:
            raise self.err(path, f"missing required field(s) {sorted(missing)}")
        return v

    def arr(self, v, path: str) -> list:
        if not isinstance(v, list):
            raise self.err(path, "expected an array")
        return v

    def num(self, v, path: str) -> float:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.err(path, "expected a number")
        if not math.isfinite(v):
            raise self.err(path, "expected a finite number")
        return float(v)

    def text(self, v, path: str) -> str:
        if not isinstance(v, str):
            raise self.err(path, "expected a string")
        return v

    def flag(self, v, path: str) -> bool:
        if not isinstance(v, bool):
            raise self.err(path, "expected a boolean")
        return v

    def vec(self, v, path: str, n: int) -> tuple:
        a = self.arr(v, path)
        if len(a) != n:
            raise self.err(path, f"expected {n} components")
        return tuple(self.num(x, f"{path}[{i}]") for i, x in enumerate(a))


def _read_plane(r: _Reader, v, path: str) -> SketchPlane:
    o = r.obj(v, path, {"translation", "euler_angles"}, {"translation", "euler_angles"})
    return SketchPlane(r.vec(o["translation"], f"{path}.translation", 3),
                       r.vec(o["euler_angles"], f"{path}.euler_angles", 3))


def _read_primitive(r: _Reader, v, path: str) -> Primitive:
    if not isinstance(v, dict):
        raise r.err(path, "expected an object")
    kind = r.text(v.get("kind"), f"{path}.kind") if "kind" in v else None
    if kind is None:
        raise r.err(path, "missing required field(s) ['kind']")
    if kind == "line":
        o = r.obj(v, path, {"id", "kind", "start", "end"}, {"id", "start", "end"})
        return Line(r.text(o["id"], f"{path}.id"),
                    r.vec(o["start"], f"{path}.start", 2), r.vec(o["end"], f"{path}.end", 2))
    if kind == "circle":
        o = r.obj(v, path, {"id", "kind", "center", "radius"}, {"id", "center", "radius"})
        return Circle(r.text(o["id"], f"{path}.id"),
                      r.vec(o["center"], f"{path}.center", 2), r.num(o["radius"], f"{path}.radius"))
    if kind == "arc":
        o = r.obj(v, path, {"id", "kind", "start", "mid", "end"}, {"id", "start", "mid", "end"})
        return Arc(r.text(o["id"], f"{path}.id"), r.vec(o["start"], f"{path}.start", 2),
                   r.vec(o["mid"], f"{path}.mid", 2), r.vec(o["end"], f"{path}.end", 2))
    raise r.err(f"{path}.kind", f"unknown primitive kind {kind!r}")


def _read_constraint(r: _Reader, v, path: str) -> Constraint:
    o = r.obj(v, path, {"kind", "refs", "pin"}, {"kind", "refs"})
    kind_s = r.text(o["kind"], f"{path}.kind")
    try:
        kind = ConstraintKind(kind_s)
    except ValueError:
        raise r.err(f"{path}.kind", f"unknown constraint kind {kind_s!r}") from None
    refs = []
    for i, rv in enumerate(r.arr(o["refs"], f"{path}.refs")):
        rp = f"{path}.refs[{i}]"
        ro = r.obj(rv, rp, {"ref", "anchor"}, {"ref"})
        anchor = Anchor.WHOLE
        if "anchor" in ro:
            a_s = r.text(ro["anchor"], f"{rp}.anchor")
            try:
                anchor = Anchor(a_s)
            except ValueError:
                raise r.err(f"{rp}.anchor", f"unknown anchor {a_s!r}") from None
        refs.append(ConstraintRef(r.text(ro["ref"], f"{rp}.ref"), anchor))
    if not 1 <= len(refs) <= 2:
        raise r.err(f"{path}.refs", "constraints take 1 or 2 references")
    pin = None
    if "pin" in o:
        pin = tuple(r.num(x, f"{path}.pin[{i}]") for i, x in enumerate(r.arr(o["pin"], f"{path}.pin")))
    return Constraint(kind, tuple(refs), pin)


def _read_extrusion(r: _Reader, v, path: str) -> Extrusion:
    if not isinstance(v, dict):
        raise r.err(path, "expected an object")
    mode = v.get("mode")
    if mode == "linear":
        o = r.obj(v, path, {"mode", "direction", "length", "back_length", "symmetric"},
                  {"direction", "length"})
        return LinearExtrusion(
            r.vec(o["direction"], f"{path}.direction", 3), r.num(o["length"], f"{path}.length"),
            r.num(o.get("back_length", 0.0), f"{path}.back_length"),
            r.flag(o.get("symmetric", False), f"{path}.symmetric"))
    if mode == "rotated":
        o = r.obj(v, path, {"mode", "axis_point", "axis_dir", "start_angle", "end_angle"},
                  {"axis_point", "axis_dir", "start_angle", "end_angle"})
        return RotatedExtrusion(
            r.vec(o["axis_point"], f"{path}.axis_point", 3), r.vec(o["axis_dir"], f"{path}.axis_dir", 3),
            r.num(o["start_angle"], f"{path}.start_angle"), r.num(o["end_angle"], f"{path}.end_angle"))
    raise r.err(f"{path}.mode", f"extrusion mode must be 'linear' or 'rotated', got {mode!r}")


def _read_boolean(r: _Reader, v, path: str) -> BooleanOp:
    s = r.text(v, path)
    try:
        return BooleanOp(s)
    except ValueError:
        raise r.err(path, f"unknown boolean operation {s!r}") from None


def _load_json(text) -> Any:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DocumentSyntaxError(f"invalid UTF-8: {e}", line=1, column=1) from None
    if not isinstance(text, str):
        raise DocumentSyntaxError("input is not text", line=1, column=1)
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentSyntaxError(e.msg, line=e.lineno, column=e.colno) from None


def parse_document(text, strict: bool = True,
                   warnings: Optional[list[str]] = None) -> Document:
    """Parse canonical `.hcad` text; total (every failure is a located error).

    Unknown fields are rejected in strict mode and collected into
    ``warnings`` in lenient mode.
    """
    data = _load_json(text)
    r = _Reader(strict, warnings)
    root = r.obj(data, "", {"format_version", "metadata", "parts"}, {"format_version", "parts"})
    version = root["format_version"]
    if version != FORMAT_VERSION:
        raise r.err("format_version", f"unsupported format_version {version!r}")

    source, scale = "", 1.0
    if "metadata" in root:
        mo = r.obj(root["metadata"], "metadata", {"source", "scale"}, set())
        source = r.text(mo.get("source", ""), "metadata.source")
        scale = r.num(mo.get("scale", 1.0), "metadata.scale")

    parts = []
    for i, pv in enumerate(r.arr(root["parts"], "parts")):
        ppath = f"parts[{i}]"
        po = r.obj(pv, ppath, {"sketch", "extrusion", "boolean"}, {"sketch", "extrusion", "boolean"})
        so = r.obj(po["sketch"], f"{ppath}.sketch", {"plane", "primitives", "constraints"}, {"plane"})
        plane = _read_plane(r, so["plane"], f"{ppath}.sketch.plane")
        prims: list[Primitive] = []
        seen: set[str] = set()
        for j, prv in enumerate(r.arr(so.get("primitives", []), f"{ppath}.sketch.primitives")):
            prim = _read_primitive(r, prv, f"{ppath}.sketch.primitives[{j}]")
            if prim.id in seen:
                raise DuplicateIdError(
                    f"duplicate primitive id {prim.id!r} in {ppath}.sketch", id=prim.id)
            seen.add(prim.id)
            prims.append(prim)
        cons = [
            _read_constraint(r, cv, f"{ppath}.sketch.constraints[{j}]")
            for j, cv in enumerate(r.arr(so.get("constraints", []), f"{ppath}.sketch.constraints"))
        ]
        ext = _read_extrusion(r, po["extrusion"], f"{ppath}.extrusion")
        boolean = _read_boolean(r, po["boolean"], f"{ppath}.boolean")
        parts.append(Part(Sketch(plane, tuple(prims), tuple(cons)), ext, boolean))

    return Document(tuple(parts), DocumentMetadata(source, scale))


# --- legacy hierarchical format -----------------------------------------------

@dataclass(frozen=True)
class HierCurve:
    """A curve inside a legacy loop; ``reversed`` flips traversal direction."""

    curve: Primitive
    reversed: bool = False

    def endpoints(self) -> tuple[tuple[float, float], tuple[float, float]]:
        c = self.curve
        if isinstance(c, Circle):
            p = (c.center[0] + c.radius, c.center[1])
            return p, p
        a, b = c.start, c.end
        return (b, a) if self.reversed else (a, b)


@dataclass(frozen=True)
class HierLoop:
    curves: tuple[HierCurve, ...]


@dataclass(frozen=True)
class HierFace:
    loops: tuple[HierLoop, ...]


@dataclass(frozen=True)
class HierarchicalSketch:
    plane: SketchPlane
    faces: tuple[HierFace, ...]
    constraints: tuple[Constraint, ...] = ()


_HIER_CURVE_KINDS = {"line", "arc", "circle"}


def _read_hier_curve(r: _Reader, v, path: str, auto_id: str) -> HierCurve:
    if not isinstance(v, dict):
        raise r.err(path, "expected an object")
    kind = v.get("kind")
    if not isinstance(kind, str):
        raise r.err(f"{path}.kind", "expected a string curve kind")
    if kind not in _HIER_CURVE_KINDS:
        raise UnsupportedCurveError(
            f"unsupported curve kind {kind!r} at {path} (only line/arc/circle)", kind=kind)
    rev = False
    if "reversed" in v:
        rev = r.flag(v["reversed"], f"{path}.reversed")
    body = {k: w for k, w in v.items() if k != "reversed"}
    if "id" not in body:
        body = {"id": auto_id, **body}
    prim = _read_primitive(r, body, path)
    return HierCurve(prim, rev)


def _sketch_points(faces: list[HierFace]) -> np.ndarray:
    pts = []
    for f in faces:
        for lp in f.loops:
            for hc in lp.curves:
                c = hc.curve
                if isinstance(c, Line):
                    pts.extend((c.start, c.end))
                elif isinstance(c, Circle):
                    pts.extend(((c.center[0] - c.radius, c.center[1] - c.radius),
                                (c.center[0] + c.radius, c.center[1] + c.radius)))
                else:
                    pts.extend((c.start, c.mid, c.end))
    return np.asarray(pts, dtype=float) if pts else np.zeros((0, 2))


def _check_loop_closed(loop: HierLoop, eps: float, path: str) -> None:
    curves = loop.curves
    if any(isinstance(hc.curve, Circle) for hc in curves):
        if len(curves) != 1:
            raise OpenLoopError(f"circle must be the only curve in its loop at {path}")
        return
    n = len(curves)
    for i in range(n):
        _, tail = curves[i].endpoints()
        head, _ = curves[(i + 1) % n].endpoints()
        if math.dist(tail, head) > eps:
            raise OpenLoopError(
                f"loop not closed at {path}: curve {i} ends {math.dist(tail, head):g} away "
                f"from curve {(i + 1) % n}")


def import_hierarchical(text, strict: bool = True, warnings: Optional[list[str]] = None
                        ) -> tuple[list[HierarchicalSketch], list[Extrusion], list[BooleanOp]]:
    """Parse a legacy `.hier` file into per-sketch face-loop structures."""
    data = _load_json(text)
    r = _Reader(strict, warnings)
    root = r.obj(data, "", {"format_version", "sketches", "extrusions", "booleans"},
                 {"format_version", "sketches", "extrusions", "booleans"})
    if root["format_version"] != FORMAT_VERSION:
        raise r.err("format_version", f"unsupported format_version {root['format_version']!r}")

    sketches = []
    for i, sv in enumerate(r.arr(root["sketches"], "sketches")):
        spath = f"sketches[{i}]"
        so = r.obj(sv, spath, {"plane", "faces", "constraints"}, {"plane", "faces"})
        plane = _read_plane(r, so["plane"], f"{spath}.plane")
        faces = []
        for fi, fv in enumerate(r.arr(so["faces"], f"{spath}.faces")):
            fpath = f"{spath}.faces[{fi}]"
            fo = r.obj(fv, fpath, {"loops"}, {"loops"})
            loops = []
            for li, lv in enumerate(r.arr(fo["loops"], f"{fpath}.loops")):
                lpath = f"{fpath}.loops[{li}]"
                lo = r.obj(lv, lpath, {"curves"}, {"curves"})
                curves = [
                    _read_hier_curve(r, cv, f"{lpath}.curves[{ci}]", f"f{fi}_l{li}_c{ci}")
                    for ci, cv in enumerate(r.arr(lo["curves"], f"{lpath}.curves"))
                ]
                if not curves:
                    raise r.err(lpath, "loop has no curves")
                loops.append(HierLoop(tuple(curves)))
            if not loops:
                raise r.err(fpath, "face has no loops")
            faces.append(HierFace(tuple(loops)))
        cons = [
            _read_constraint(r, cv, f"{spath}.constraints[{j}]")
            for j, cv in enumerate(r.arr(so.get("constraints", []), f"{spath}.constraints"))
        ]
        pts = _sketch_points(faces)
        extent = float(np.max(pts.max(axis=0) - pts.min(axis=0))) if len(pts) else 0.0
        eps = EPS_GEOM_REL * max(extent, 1e-30)
        for fi, face in enumerate(faces):
            for li, loop in enumerate(face.loops):
                _check_loop_closed(loop, eps, f"{spath}.faces[{fi}].loops[{li}]")
        sketches.append(HierarchicalSketch(plane, tuple(faces), tuple(cons)))

    extrusions = [_read_extrusion(r, ev, f"extrusions[{i}]")
                  for i, ev in enumerate(r.arr(root["extrusions"], "extrusions"))]
    booleans = [_read_boolean(r, bv, f"booleans[{i}]")
                for i, bv in enumerate(r.arr(root["booleans"], "booleans"))]
    if not (len(sketches) == len(extrusions) == len(booleans)):
        raise r.err("", "sketches, extrusions, and booleans must have equal length")
    return sketches, extrusions, booleans
