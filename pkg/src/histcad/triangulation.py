"""Polygon triangulation: bridge-edge hole elimination followed by ear clipping.

Dependency-free and deterministic. Input is a list of 2D points and
optional hole start offsets; output triangles index the input points, with
bridge duplicates collapsing onto their original indices so downstream
meshes stay watertight. Winding of the input rings is normalized internally.
"""

from __future__ import annotations

import math

import numpy as np


class _Node:
    __slots__ = ("i", "x", "y", "prev", "next", "steiner")

    def __init__(self, i: int, x: float, y: float):
        self.i = i
        self.x = x
        self.y = y
        self.prev = None
        self.next = None
        self.steiner = False


def _insert_node(i, x, y, last):
    node = _Node(i, x, y)
    if last is None:
        node.prev = node
        node.next = node
    else:
        node.next = last.next
        node.prev = last
        last.next.prev = node
        last.next = node
    return node


def _remove_node(p):
    p.next.prev = p.prev
    p.prev.next = p.next


def _signed_area(pts, start, end) -> float:
    s = 0.0
    j = end - 1
    for i in range(start, end):
        s += (pts[j][0] - pts[i][0]) * (pts[i][1] + pts[j][1])
        j = i
    return s


def _linked_list(pts, start, end, clockwise):
    last = None
    if clockwise == (_signed_area(pts, start, end) > 0):
        for i in range(start, end):
            last = _insert_node(i, pts[i][0], pts[i][1], last)
    else:
        for i in reversed(range(start, end)):
            last = _insert_node(i, pts[i][0], pts[i][1], last)
    if last and _equals(last, last.next):
        _remove_node(last)
        last = last.next
    return last


def _equals(p, q) -> bool:
    return p.x == q.x and p.y == q.y


def _area(p, q, r) -> float:
    return (q.y - p.y) * (r.x - q.x) - (q.x - p.x) * (r.y - q.y)


def _point_in_triangle(ax, ay, bx, by, cx, cy, px, py) -> bool:
    return ((cx - px) * (ay - py) >= (ax - px) * (cy - py)
            and (ax - px) * (by - py) >= (bx - px) * (ay - py)
            and (bx - px) * (cy - py) >= (cx - px) * (by - py))


def _filter_points(start, end=None):
    if start is None:
        return start
    if end is None:
        end = start
    p = start
    while True:
        again = False
        if not p.steiner and (_equals(p, p.next) or _area(p.prev, p, p.next) == 0):
            _remove_node(p)
            p = end = p.prev
            if p == p.next:
                break
            again = True
        else:
            p = p.next
        if not again and p == end:
            break
    return end


def _is_ear(ear) -> bool:
    a, b, c = ear.prev, ear, ear.next
    if _area(a, b, c) >= 0:
        return False  # reflex
    p = ear.next.next
    while p != ear.prev:
        if (_point_in_triangle(a.x, a.y, b.x, b.y, c.x, c.y, p.x, p.y)
                and _area(p.prev, p, p.next) >= 0):
            return False
        p = p.next
    return True


def _earcut_linked(ear, triangles, pass_num=0):
    if ear is None:
        return
    stop = ear
    while ear.prev != ear.next:
        prev = ear.prev
        nxt = ear.next
        if _is_ear(ear):
            triangles.append((prev.i, ear.i, nxt.i))
            _remove_node(ear)
            ear = nxt.next
            stop = nxt.next
            continue
        ear = nxt
        if ear == stop:
            if pass_num == 0:
                _earcut_linked(_filter_points(ear), triangles, 1)
            elif pass_num == 1:
                ear = _cure_local_intersections(_filter_points(ear), triangles)
                _earcut_linked(ear, triangles, 2)
            elif pass_num == 2:
                _split_earcut(ear, triangles)
            break


def _cure_local_intersections(start, triangles):
    p = start
    while True:
        a, b = p.prev, p.next.next
        if (not _equals(a, b) and _intersects(a, p, p.next, b)
                and _locally_inside(a, b) and _locally_inside(b, a)):
            triangles.append((a.i, p.i, b.i))
            _remove_node(p)
            _remove_node(p.next)
            p = start = b
        p = p.next
        if p == start:
            break
    return _filter_points(p)


def _split_earcut(start, triangles):
    a = start
    while True:
        b = a.next.next
        while b != a.prev:
            if a.i != b.i and _valid_diagonal(a, b):
                c = _split_polygon(a, b)
                a = _filter_points(a, a.next)
                c = _filter_points(c, c.next)
                _earcut_linked(a, triangles)
                _earcut_linked(c, triangles)
                return
            b = b.next
        a = a.next
        if a == start:
            break


def _intersects(p1, q1, p2, q2) -> bool:
    if (_equals(p1, p2) and _equals(q1, q2)) or (_equals(p1, q2) and _equals(q1, p2)):
        return True

    def sign(v):
        return (1 if v > 0 else 0) - (1 if v < 0 else 0)

    o1 = sign(_area(p1, q1, p2))
    o2 = sign(_area(p1, q1, q2))
    o3 = sign(_area(p2, q2, p1))
    o4 = sign(_area(p2, q2, q1))
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and _on_segment(p1, p2, q1):
        return True
    if o2 == 0 and _on_segment(p1, q2, q1):
        return True
    if o3 == 0 and _on_segment(p2, p1, q2):
        return True
    if o4 == 0 and _on_segment(p2, q1, q2):
        return True
    return False


def _on_segment(p, q, r) -> bool:
    return (q.x <= max(p.x, r.x) and q.x >= min(p.x, r.x)
            and q.y <= max(p.y, r.y) and q.y >= min(p.y, r.y))


def _intersects_polygon(a, b) -> bool:
    p = a
    while True:
        if (p.i != a.i and p.next.i != a.i and p.i != b.i and p.next.i != b.i
                and _intersects(p, p.next, a, b)):
            return True
        p = p.next
        if p == a:
            break
    return False


def _locally_inside(a, b) -> bool:
    if _area(a.prev, a, a.next) < 0:
        return _area(a, b, a.next) >= 0 and _area(a, a.prev, b) >= 0
    return _area(a, b, a.prev) < 0 or _area(a, a.next, b) < 0


def _middle_inside(a, b) -> bool:
    p = a
    inside = False
    px = (a.x + b.x) / 2
    py = (a.y + b.y) / 2
    while True:
        if (((p.y > py) != (p.next.y > py)) and p.next.y != p.y
                and px < (p.next.x - p.x) * (py - p.y) / (p.next.y - p.y) + p.x):
            inside = not inside
        p = p.next
        if p == a:
            break
    return inside


def _valid_diagonal(a, b) -> bool:
    return (a.next.i != b.i and a.prev.i != b.i and not _intersects_polygon(a, b)
            and (_locally_inside(a, b) and _locally_inside(b, a) and _middle_inside(a, b)
                 and (_area(a.prev, a, b.prev) or _area(a, b.prev, b))
                 or _equals(a, b) and _area(a.prev, a, a.next) > 0 and _area(b.prev, b, b.next) > 0))


def _split_polygon(a, b):
    a2 = _Node(a.i, a.x, a.y)
    b2 = _Node(b.i, b.x, b.y)
    an = a.next
    bp = b.prev
    a.next = b
    b.prev = a
    a2.next = an
    an.prev = a2
    b2.next = a2
    a2.prev = b2
    bp.next = b2
    b2.prev = bp
    return b2


def _find_hole_bridge(hole, outer_node):
    p = outer_node
    hx = hole.x
    hy = hole.y
    qx = -math.inf
    m = None
    while True:
        if p.y >= hy >= p.next.y and p.next.y != p.y:
            x = p.x + (hy - p.y) * (p.next.x - p.x) / (p.next.y - p.y)
            if hx >= x > qx:
                qx = x
                if x == hx:
                    if hy == p.y:
                        return p
                    if hy == p.next.y:
                        return p.next
                m = p if p.x < p.next.x else p.next
        p = p.next
        if p == outer_node:
            break
    if m is None:
        return None
    if hx == qx:
        return m.prev

    stop = m
    mx = m.x
    my = m.y
    tan_min = math.inf
    p = m.next
    while p != stop:
        if (hx >= p.x >= mx and hx != p.x
                and _point_in_triangle(hx if hy < my else qx, hy, mx, my,
                                       qx if hy < my else hx, hy, p.x, p.y)):
            tan = abs(hy - p.y) / (hx - p.x)
            if ((tan < tan_min or (tan == tan_min and p.x > m.x)) and _locally_inside(p, hole)):
                m = p
                tan_min = tan
        p = p.next
    return m


def _eliminate_hole(hole, outer_node):
    bridge = _find_hole_bridge(hole, outer_node)
    if bridge is None:
        return outer_node
    bridge_reverse = _split_polygon(bridge, hole)
    _filter_points(bridge_reverse, bridge_reverse.next)
    return _filter_points(bridge, bridge.next)


def _eliminate_holes(pts, hole_indices, outer_node):
    queue = []
    for i, start in enumerate(hole_indices):
        end = hole_indices[i + 1] if i < len(hole_indices) - 1 else len(pts)
        lst = _linked_list(pts, start, end, False)
        if lst is not None:
            if lst == lst.next:
                lst.steiner = True
            queue.append(_leftmost(lst))
    queue.sort(key=lambda n: (n.x, n.y))
    for hole in queue:
        outer_node = _eliminate_hole(hole, outer_node)
        outer_node = _filter_points(outer_node, outer_node.next)
    return outer_node


def _leftmost(start):
    p = start
    leftmost = start
    while True:
        if p.x < leftmost.x or (p.x == leftmost.x and p.y < leftmost.y):
            leftmost = p
        p = p.next
        if p == start:
            break
    return leftmost


def triangulate_polygon(outer: np.ndarray, holes: list[np.ndarray]) -> np.ndarray:
    """Triangulate a polygon with holes.

    Returns (k, 3) indices into the concatenation ``[outer, *holes]``.
    The summed triangle area equals the outer area minus the hole areas.
    """
    pts: list[tuple[float, float]] = [(float(p[0]), float(p[1]))
                                      for p in np.asarray(outer, dtype=float)]
    hole_indices = []
    for h in holes:
        hole_indices.append(len(pts))
        pts.extend((float(p[0]), float(p[1])) for p in np.asarray(h, dtype=float))

    outer_len = hole_indices[0] if hole_indices else len(pts)
    outer_node = _linked_list(pts, 0, outer_len, True)
    triangles: list[tuple[int, int, int]] = []
    if outer_node is None or outer_node.next == outer_node.prev:
        return np.zeros((0, 3), dtype=np.int32)
    if hole_indices:
        outer_node = _eliminate_holes(pts, hole_indices, outer_node)
    _earcut_linked(outer_node, triangles)
    return np.asarray(triangles, dtype=np.int32).reshape(-1, 3)
