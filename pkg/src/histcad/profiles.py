"""Discretized planar profiles built from loop-dictionary entries.

Arcs and circles are discretized at a chord tolerance of 1e-3 x loop extent
with a floor of 96 segments per full turn, which keeps the polygonal area
within 0.1% of the analytic value (the relative deficit of an inscribed
n-gon is (2*pi/n)^2 / 6). Outer rings are CCW, holes CW.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geom2d
from .errors import SelfIntersectingProfileError
from .topology import Loop, LoopGroup
from .triangulation import triangulate_polygon

CHORD_TOL_REL = 1e-3
MIN_SEGMENTS_PER_TURN = 96

_TWO_PI = geom2d.TWO_PI


@dataclass
class Profile:
    outer: np.ndarray                 # (n, 2) CCW
    holes: list[np.ndarray] = field(default_factory=list)  # each (m, 2) CW
    chord_tol: float = 0.0

    def area(self) -> float:
        # hole rings are CW, so their shoelace terms subtract directly
        return geom2d.polygon_area(self.outer) + sum(geom2d.polygon_area(h) for h in self.holes)

    def rings(self) -> list[np.ndarray]:
        return [self.outer, *self.holes]

    def all_points(self) -> np.ndarray:
        return np.concatenate(self.rings())

    def triangulate(self) -> np.ndarray:
        """(k, 3) triangles indexing ``all_points()``, total area preserved."""
        return triangulate_polygon(self.outer, self.holes)


def _segments_for_sweep(sweep: float, radius: float, chord_tol: float) -> int:
    tol = min(chord_tol, radius)
    dtheta = 2.0 * math.acos(max(-1.0, 1.0 - tol / radius))
    n_chord = int(math.ceil(sweep / max(dtheta, 1e-9)))
    n_floor = int(math.ceil(sweep / (_TWO_PI / MIN_SEGMENTS_PER_TURN)))
    return max(2, n_chord, n_floor)


def discretize_loop(loop: Loop, chord_tol: float) -> np.ndarray:
    """Closed polyline of the loop at the given chord tolerance (CCW)."""
    pts: list[tuple[float, float]] = []
    for el in loop.elements:
        p = el.primitive
        tail, head = el.endpoints()
        if p.kind == "line":
            pts.append(tail)
        elif p.kind == "circle":
            n = _segments_for_sweep(_TWO_PI, p.radius, chord_tol)
            for k in range(n):
                pts.append(geom2d.arc_point(p.center, p.radius, _TWO_PI * k / n))
        else:
            c, r, a0, sweep, ccw = geom2d.arc_ccw_interval(p.start, p.mid, p.end)
            traversal_ccw = ccw != el.reversed
            n = _segments_for_sweep(sweep, r, chord_tol)
            start_ang = a0 if traversal_ccw else a0 + sweep
            step = sweep / n if traversal_ccw else -sweep / n
            for k in range(n):
                pts.append(geom2d.arc_point(c, r, start_ang + step * k))
    return np.asarray(pts, dtype=float)


def build_profile(group: LoopGroup, chord_tol_rel: float = CHORD_TOL_REL) -> Profile:
    """Discretize one outer loop and its holes into a polygon with holes."""
    bbox = group.outer.bbox
    extent = max(bbox[2] - bbox[0], bbox[3] - bbox[1])
    chord_tol = chord_tol_rel * max(extent, 1e-30)

    outer = discretize_loop(group.outer, chord_tol)
    if geom2d.polygon_area(outer) < 0:
        outer = outer[::-1]
    if not geom2d.polyline_is_simple(outer, 1e-12):
        raise SelfIntersectingProfileError("outer loop self-intersects")

    holes = []
    for name in sorted(group.holes):
        h = discretize_loop(group.holes[name], chord_tol)
        if not geom2d.polyline_is_simple(h, 1e-12):
            raise SelfIntersectingProfileError(f"hole loop {name} self-intersects")
        if geom2d.polygon_area(h) > 0:
            h = h[::-1]
        holes.append(h)
    return Profile(outer, holes, chord_tol)
