"""Planar computational-geometry helpers shared across the toolkit.

Points are ``(x, y)`` tuples or ``(n, 2)`` float arrays. Arc math works on
the circumscribed circle of three sample points; angular intervals are
always expressed counter-clockwise as ``(start_angle, sweep)`` with
``sweep`` in ``(0, 2*pi]``.
"""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

TWO_PI = 2.0 * math.pi


def cross2(a, b) -> float:
    return a[0] * b[1] - a[1] * b[0]


def dot2(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1]


def norm2(a) -> float:
    return math.hypot(a[0], a[1])


def unit2(a) -> tuple[float, float]:
    n = norm2(a)
    if n == 0.0:
        raise ZeroDivisionError("zero-length vector")
    return (a[0] / n, a[1] / n)


def normalize_angle(a: float) -> float:
    """Map an angle into (-pi, pi]."""
    a = math.fmod(a, TWO_PI)
    if a <= -math.pi:
        a += TWO_PI
    elif a > math.pi:
        a -= TWO_PI
    return a


def circumcircle(p0, pm, p1) -> tuple[tuple[float, float], float]:
    """Center and radius of the circle through three points.

    Raises ValueError when the points are (numerically) collinear.
    """
    ax, ay = p0
    bx, by = pm
    cx, cy = p1
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    scale = max(abs(ax), abs(ay), abs(bx), abs(by), abs(cx), abs(cy), 1.0)
    if abs(d) <= 1e-14 * scale * scale:
        raise ValueError("collinear points have no circumscribed circle")
    ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay)
          + (cx * cx + cy * cy) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx)
          + (cx * cx + cy * cy) * (bx - ax)) / d
    r = math.hypot(ax - ux, ay - uy)
    return (ux, uy), r


def arc_ccw_interval(p0, pm, p1) -> tuple[tuple[float, float], float, float, float, bool]:
    """Resolve an arc given by start/mid/end points into a CCW interval.

    Returns ``(center, radius, ccw_start_angle, sweep, traversal_is_ccw)``.
    The CCW interval covers the same point set regardless of traversal
    direction; ``traversal_is_ccw`` records the original direction.
    """
    center, radius = circumcircle(p0, pm, p1)
    a0 = math.atan2(p0[1] - center[1], p0[0] - center[0])
    a1 = math.atan2(p1[1] - center[1], p1[0] - center[0])
    ccw = cross2((pm[0] - p0[0], pm[1] - p0[1]), (p1[0] - pm[0], p1[1] - pm[1])) > 0.0
    if ccw:
        sweep = (a1 - a0) % TWO_PI
        start = a0
    else:
        sweep = (a0 - a1) % TWO_PI
        start = a1
    if sweep == 0.0:
        sweep = TWO_PI
    return center, radius, start, sweep, ccw


def arc_point(center, radius: float, angle: float) -> tuple[float, float]:
    return (center[0] + radius * math.cos(angle), center[1] + radius * math.sin(angle))


def angle_in_ccw_interval(angle: float, start: float, sweep: float, tol: float = 0.0) -> bool:
    """Whether ``angle`` lies inside the open CCW interval (start, start+sweep)."""
    rel = (angle - start) % TWO_PI
    return tol < rel < sweep - tol


def arc_bbox(center, radius: float, start: float, sweep: float) -> tuple[float, float, float, float]:
    """Tight axis-aligned bounding box of a CCW arc."""
    pts = [arc_point(center, radius, start), arc_point(center, radius, start + sweep)]
    for axis_angle in (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi):
        rel = (axis_angle - start) % TWO_PI
        if rel <= sweep:
            pts.append(arc_point(center, radius, axis_angle))
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return (min(xs), min(ys), max(xs), max(ys))


def polygon_area(pts: np.ndarray) -> float:
    """Signed shoelace area; positive for CCW. ``pts`` is (n, 2), not closed."""
    x = pts[:, 0]
    y = pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def segment_arc_area(p_from, p_to, center, radius: float, sweep_signed: float) -> float:
    """Green's-theorem contribution of a traversed arc minus its chord.

    ``sweep_signed`` is positive for CCW traversal. Adding this to the
    shoelace term of the chord yields the exact area contribution.
    """
    return 0.5 * radius * radius * (sweep_signed - math.sin(sweep_signed))


_RAY_ANGLES = (0.0, 0.4636476090008061, 1.1071487177940904, 2.0344439357957027, 2.896613990462929)


def point_in_polygon(pt, poly: np.ndarray, eps: float) -> bool:
    """Ray-casting point-in-polygon with perturbed-ray retry on grazing hits.

    ``poly`` is (n, 2) and not closed. Points within ``eps`` of the boundary
    are classified as inside=False by the caller's convention (we return the
    parity of the first clean ray).
    """
    n = len(poly)
    px, py = float(pt[0]), float(pt[1])
    for ang in _RAY_ANGLES:
        dx, dy = math.cos(ang), math.sin(ang)
        crossings = 0
        clean = True
        for i in range(n):
            x1, y1 = poly[i]
            x2, y2 = poly[(i + 1) % n]
            # signed perpendicular offsets of segment ends from the ray line
            s1 = (x1 - px) * dy - (y1 - py) * dx
            s2 = (x2 - px) * dy - (y2 - py) * dx
            if abs(s1) <= eps or abs(s2) <= eps:
                clean = False
                break
            if (s1 > 0.0) != (s2 > 0.0):
                t = s1 / (s1 - s2)
                ix = x1 + t * (x2 - x1)
                iy = y1 + t * (y2 - y1)
                along = (ix - px) * dx + (iy - py) * dy
                if abs(along) <= eps:
                    clean = False
                    break
                if along > 0.0:
                    crossings += 1
        if clean:
            return crossings % 2 == 1
    # all retry rays grazed: point is effectively on the boundary
    return False


def segments_properly_intersect(a0, a1, b0, b1, eps: float) -> bool:
    """Proper crossing test: interiors intersect (shared endpoints excluded)."""
    d1 = cross2((a1[0] - a0[0], a1[1] - a0[1]), (b0[0] - a0[0], b0[1] - a0[1]))
    d2 = cross2((a1[0] - a0[0], a1[1] - a0[1]), (b1[0] - a0[0], b1[1] - a0[1]))
    d3 = cross2((b1[0] - b0[0], b1[1] - b0[1]), (a0[0] - b0[0], a0[1] - b0[1]))
    d4 = cross2((b1[0] - b0[0], b1[1] - b0[1]), (a1[0] - b0[0], a1[1] - b0[1]))
    if ((d1 > eps and d2 < -eps) or (d1 < -eps and d2 > eps)) and \
       ((d3 > eps and d4 < -eps) or (d3 < -eps and d4 > eps)):
        return True
    return False


def polyline_is_simple(pts: np.ndarray, eps: float) -> bool:
    """True when the closed polyline has no properly crossing segment pair."""
    n = len(pts)
    if n < 3:
        return True
    scale = float(max(np.max(np.abs(pts)), 1.0))
    tol = eps * scale
    for i in range(n):
        a0 = pts[i]
        a1 = pts[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue  # adjacent through the closure
            if segments_properly_intersect(a0, a1, pts[j], pts[(j + 1) % n], tol):
                return False
    return True


def polyline_pair_intersects(a: np.ndarray, b: np.ndarray, eps: float) -> bool:
    """Whether any segment of closed polyline ``a`` properly crosses one of ``b``."""
    scale = float(max(np.max(np.abs(a)), np.max(np.abs(b)), 1.0))
    tol = eps * scale
    na, nb = len(a), len(b)
    for i in range(na):
        a0 = a[i]
        a1 = a[(i + 1) % na]
        for j in range(nb):
            if segments_properly_intersect(a0, a1, b[j], b[(j + 1) % nb], tol):
                return True
    return False


def bbox_union(boxes: Sequence[tuple[float, float, float, float]]) -> tuple[float, float, float, float]:
    xs0, ys0, xs1, ys1 = zip(*boxes)
    return (min(xs0), min(ys0), max(xs1), max(ys1))


def points_in_polygon(pts: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Vectorized crossing-number test for (m, 2) points against an (n, 2) polygon."""
    pts = np.asarray(pts, dtype=float)
    x = pts[:, 0][:, None]
    y = pts[:, 1][:, None]
    x1 = poly[:, 0][None, :]
    y1 = poly[:, 1][None, :]
    x2 = np.roll(poly[:, 0], -1)[None, :]
    y2 = np.roll(poly[:, 1], -1)[None, :]
    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddles & (x < xint)
    return np.sum(hits, axis=1) % 2 == 1


def polyline_pair_intersects_vec(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    """Vectorized proper-crossing test between two closed polylines."""
    a0 = np.asarray(a, dtype=float)
    a1 = np.roll(a0, -1, axis=0)
    b0 = np.asarray(b, dtype=float)
    b1 = np.roll(b0, -1, axis=0)

    da = (a1 - a0)[:, None, :]
    db = (b1 - b0)[None, :, :]
    r0 = b0[None, :, :] - a0[:, None, :]
    r1 = b1[None, :, :] - a0[:, None, :]
    s0 = a0[:, None, :] - b0[None, :, :]
    s1 = a1[:, None, :] - b0[None, :, :]

    d1 = da[..., 0] * r0[..., 1] - da[..., 1] * r0[..., 0]
    d2 = da[..., 0] * r1[..., 1] - da[..., 1] * r1[..., 0]
    d3 = db[..., 0] * s0[..., 1] - db[..., 1] * s0[..., 0]
    d4 = db[..., 0] * s1[..., 1] - db[..., 1] * s1[..., 0]

    cross_ab = ((d1 > tol) & (d2 < -tol)) | ((d1 < -tol) & (d2 > tol))
    cross_ba = ((d3 > tol) & (d4 < -tol)) | ((d3 < -tol) & (d4 > tol))
    return bool(np.any(cross_ab & cross_ba))
