"""Document execution: sketches to profiles to meshes to the composed solid.

Parts run in order; the first failure stops the document and is reported
with its location (such documents count toward the invalidity ratio).
A part fails when its sketch has dangling primitives or no closed loop, or
when profile/extrusion construction rejects the geometry.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import HistcadError
from .extrude import extrude_linear, extrude_rotated
from .fields import DEFAULT_GRID, SolidField, apply_boolean
from .meshes import Mesh
from .model import Document, LinearExtrusion, Part
from .profiles import build_profile
from .topology import build_loop_dict, compute_loops


class OpenProfileError(HistcadError):
    code = "OPEN_PROFILE"


@dataclass
class ExecutionStatus:
    ok: bool
    failed_part: Optional[int] = None
    error_code: str = ""
    message: str = ""


def execute_part(part: Part) -> Mesh:
    """One part's sketch to a (possibly multi-prism) watertight body mesh."""
    loops = compute_loops(part.sketch)
    if loops.dangling:
        raise OpenProfileError(f"sketch has dangling primitives: {', '.join(loops.dangling)}")
    if not loops.loops:
        raise OpenProfileError("sketch contains no closed loop")
    loop_dict = build_loop_dict(loops.loops)

    body: Optional[Mesh] = None
    ext = part.extrusion
    for name in sorted(loop_dict):
        profile = build_profile(loop_dict[name])
        if isinstance(ext, LinearExtrusion):
            mesh = extrude_linear(profile, part.sketch.plane, ext.direction, ext.length,
                                  ext.back_length, ext.symmetric)
        else:
            mesh = extrude_rotated(profile, part.sketch.plane, ext.axis_point, ext.axis_dir,
                                   ext.start_angle, ext.end_angle)
        body = mesh if body is None else body.merged(mesh)
    return body


def execute_document(doc: Document, grid: int = DEFAULT_GRID
                     ) -> tuple[SolidField, ExecutionStatus]:
    """Execute all parts in order; on failure return the partial field plus
    a status naming the failing part."""
    current = SolidField(resolution=grid)
    for i, part in enumerate(doc.parts):
        try:
            mesh = execute_part(part)
            current = apply_boolean(current, mesh, part.boolean, resolution=grid)
        except HistcadError as e:
            status = ExecutionStatus(False, failed_part=i, error_code=e.code,
                                     message=f"part {i}: {e}")
            return current, status
    return current, ExecutionStatus(True)
