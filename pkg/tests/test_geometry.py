"""Profiles, triangulation, extrusion volume laws, Boolean fields, STL export."""

import io
import math

import numpy as np
import pytest

from conftest import square_doc, square_lines, square_sketch
from histcad import geom2d
from histcad.errors import (DegenerateDirectionError, ProfileCrossesAxisError,
                            SelfIntersectingProfileError)
from histcad.extrude import extrude_linear, extrude_rotated
from histcad.fields import SolidField, apply_boolean
from histcad.execute import execute_document, execute_part
from histcad.meshes import Mesh, read_stl, write_stl, write_xyz, read_xyz
from histcad.model import (BooleanOp, Circle, Document, Line, LinearExtrusion,
                           Part, RotatedExtrusion, Sketch, SketchPlane)
from histcad.profiles import Profile, build_profile
from histcad.topology import build_loop_dict, compute_loops
from histcad.triangulation import triangulate_polygon


def profile_of(sketch) -> Profile:
    ld = build_loop_dict(compute_loops(sketch).loops)
    (name,) = ld.keys()
    return build_profile(ld[name])


def tri_area(pts, tris):
    a = pts[tris[:, 0]]
    b = pts[tris[:, 1]]
    c = pts[tris[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    return float(np.sum(cross)) / 2.0


# --- profiles ------------------------------------------------------------------------

def test_unit_square_profile():
    p = profile_of(square_sketch())
    assert len(p.outer) == 4
    assert p.area() == pytest.approx(1.0, abs=1e-12)
    assert not p.holes


def test_square_with_circular_hole_area():
    sk = Sketch(SketchPlane(), (*square_lines(), Circle("c0", (0.5, 0.5), 0.2)))
    p = profile_of(sk)
    assert len(p.holes) == 1
    expected = 1.0 - math.pi * 0.04
    assert abs(p.area() - expected) < 1e-4


def test_bowtie_profile_rejected():
    from histcad.topology import Loop, LoopElement, LoopGroup
    prims = (Line("l0", (0, 0), (1, 1)), Line("l1", (1, 1), (1, 0)),
             Line("l2", (1, 0), (0, 1)), Line("l3", (0, 1), (0, 0)))
    elements = tuple(LoopElement(p, False) for p in prims)
    loop = Loop(elements, 0.5, 4.0, (0, 0, 1, 1))  # hand-built self-crossing cycle
    with pytest.raises(SelfIntersectingProfileError):
        build_profile(LoopGroup(loop))


def test_triangulation_preserves_area_random(rng):
    from conftest import random_star_polygon
    for _ in range(50):
        outer = random_star_polygon(rng)
        holes = []
        if rng.random() < 0.5:
            hn = 12
            ha = np.linspace(0, 2 * math.pi, hn, endpoint=False)
            hr = 0.2 * float(np.min(np.hypot(outer[:, 0], outer[:, 1])))
            holes = [np.stack([hr * np.cos(ha), hr * np.sin(ha)], axis=1)[::-1]]
        tris = triangulate_polygon(outer, holes)
        pts = np.concatenate([outer, *holes]) if holes else outer
        expected = geom2d.polygon_area(outer) + sum(geom2d.polygon_area(h) for h in holes)
        assert tri_area(pts, tris) == pytest.approx(expected, rel=1e-9)


# --- linear extrusion ------------------------------------------------------------------

def test_extrude_square_normal_volume():
    mesh = extrude_linear(profile_of(square_sketch()), SketchPlane(), (0, 0, 1), 2.0)
    assert mesh.is_watertight()
    assert mesh.volume() == pytest.approx(2.0, abs=1e-6)


def test_extrude_square_with_hole_volume():
    sk = Sketch(SketchPlane(), (*square_lines(), Circle("c0", (0.5, 0.5), 0.2)))
    mesh = extrude_linear(profile_of(sk), SketchPlane(), (0, 0, 1), 1.0)
    assert mesh.is_watertight()
    assert mesh.volume() == pytest.approx(1.0 - math.pi * 0.04, abs=1e-3)


def test_extrude_in_plane_direction_rejected():
    with pytest.raises(DegenerateDirectionError):
        extrude_linear(profile_of(square_sketch()), SketchPlane(), (1, 0, 0), 1.0)


def test_extrude_oblique_volume_law():
    d = np.array([0.2, 0.3, 0.9])
    d = tuple(d / np.linalg.norm(d))
    mesh = extrude_linear(profile_of(square_sketch()), SketchPlane(), d, 1.5)
    expected = 1.0 * 1.5 * abs(d[2])  # area x length x |dir . normal|
    assert mesh.is_watertight()
    assert mesh.volume() == pytest.approx(expected, rel=1e-3)


def test_extrude_symmetric_and_two_sided():
    p = profile_of(square_sketch())
    sym = extrude_linear(p, SketchPlane(), (0, 0, 1), 1.0, symmetric=True)
    assert sym.volume() == pytest.approx(1.0, abs=1e-6)
    lo, hi = sym.bounds()
    assert lo[2] == pytest.approx(-0.5) and hi[2] == pytest.approx(0.5)
    two = extrude_linear(p, SketchPlane(), (0, 0, 1), 1.0, back_length=0.25)
    assert two.volume() == pytest.approx(1.25, abs=1e-6)


def test_extrusion_volume_law_random_profiles(rng):
    from conftest import random_star_polygon
    for _ in range(30):
        outer = random_star_polygon(rng)
        profile = Profile(outer, [])
        d = rng.normal(size=3)
        d[2] = abs(d[2]) + 0.7
        d = tuple(d / np.linalg.norm(d))
        length = float(rng.uniform(0.3, 2.0))
        mesh = extrude_linear(profile, SketchPlane(), d, length)
        expected = geom2d.polygon_area(outer) * length * abs(d[2])
        assert mesh.is_watertight()
        assert abs(mesh.volume() - expected) <= 1e-3 * abs(expected)


# --- rotated extrusion ------------------------------------------------------------------

def annulus_sketch():
    prims = (Line("l0", (1, 0), (2, 0)), Line("l1", (2, 0), (2, 1)),
             Line("l2", (2, 1), (1, 1)), Line("l3", (1, 1), (1, 0)))
    return Sketch(SketchPlane(), prims)


def test_revolve_full_turn_annulus():
    mesh = extrude_rotated(profile_of(annulus_sketch()), SketchPlane(),
                           (0, 0, 0), (0, 1, 0), 0.0, 2 * math.pi)
    assert mesh.is_watertight()
    assert mesh.volume() == pytest.approx(3 * math.pi, rel=0.01)


def test_revolve_half_turn_half_volume():
    mesh = extrude_rotated(profile_of(annulus_sketch()), SketchPlane(),
                           (0, 0, 0), (0, 1, 0), 0.0, math.pi)
    assert mesh.is_watertight()
    assert mesh.volume() == pytest.approx(1.5 * math.pi, rel=0.01)


def test_revolve_profile_across_axis_rejected():
    sk = square_sketch(x0=-0.5, y0=0.0)  # straddles x = 0
    with pytest.raises(ProfileCrossesAxisError):
        extrude_rotated(profile_of(sk), SketchPlane(), (0, 0, 0), (0, 1, 0),
                        0.0, 2 * math.pi)


def test_revolve_pappus_random_rectangles(rng):
    for _ in range(20):
        x0 = float(rng.uniform(0.5, 3.0))
        w = float(rng.uniform(0.2, 1.5))
        y0 = float(rng.uniform(-1, 1))
        h = float(rng.uniform(0.2, 1.5))
        prims = (Line("l0", (x0, y0), (x0 + w, y0)), Line("l1", (x0 + w, y0), (x0 + w, y0 + h)),
                 Line("l2", (x0 + w, y0 + h), (x0, y0 + h)), Line("l3", (x0, y0 + h), (x0, y0)))
        mesh = extrude_rotated(profile_of(Sketch(SketchPlane(), prims)), SketchPlane(),
                               (0, 0, 0), (0, 1, 0), 0.0, 2 * math.pi)
        pappus = 2 * math.pi * (x0 + w / 2) * (w * h)
        assert mesh.is_watertight()
        assert abs(mesh.volume() - pappus) <= 0.01 * pappus


# --- Boolean fields ------------------------------------------------------------------------

def box_mesh(center, side):
    sk = square_sketch(x0=center[0] - side / 2, y0=center[1] - side / 2, side=side,
                       plane=SketchPlane((0, 0, center[2] - side / 2)))
    return extrude_linear(profile_of(sk), sk.plane, (0, 0, 1), side)


def test_boolean_subtract_centered_half_cube():
    cube = box_mesh((0, 0, 0), 1.0)
    inner = box_mesh((0, 0, 0), 0.5)
    field = apply_boolean(None, cube, BooleanOp.NEW_BODY, resolution=256)
    field = apply_boolean(field, inner, BooleanOp.SUBTRACT)
    assert field.volume() == pytest.approx(0.875, rel=0.02)


def test_boolean_join_disjoint_cubes():
    a = box_mesh((0, 0, 0), 1.0)
    b = box_mesh((3, 0, 0), 1.0)
    field = apply_boolean(apply_boolean(None, a, BooleanOp.NEW_BODY), b, BooleanOp.JOIN)
    assert field.volume() == pytest.approx(2.0, rel=0.02)


def test_boolean_intersect_self_idempotent():
    a = box_mesh((0, 0, 0), 1.0)
    field = apply_boolean(apply_boolean(None, a, BooleanOp.NEW_BODY), a, BooleanOp.INTERSECT)
    assert field.volume() == pytest.approx(1.0, rel=0.02)


def test_boolean_join_commutative():
    a = box_mesh((0, 0, 0), 1.0)
    b = box_mesh((0.6, 0, 0), 1.0)
    v1 = apply_boolean(apply_boolean(None, a, BooleanOp.NEW_BODY), b, BooleanOp.JOIN).volume()
    v2 = apply_boolean(apply_boolean(None, b, BooleanOp.NEW_BODY), a, BooleanOp.JOIN).volume()
    assert v1 == pytest.approx(v2, rel=0.02)


def test_boolean_subtract_self_nearly_empty():
    a = box_mesh((0, 0, 0), 1.0)
    field = apply_boolean(apply_boolean(None, a, BooleanOp.NEW_BODY), a, BooleanOp.SUBTRACT)
    assert field.volume() <= 0.02 * 1.0


def test_new_body_replaces():
    a = box_mesh((0, 0, 0), 1.0)
    b = box_mesh((5, 0, 0), 0.5)
    field = apply_boolean(apply_boolean(None, a, BooleanOp.NEW_BODY), b, BooleanOp.NEW_BODY)
    assert field.is_single_body
    assert field.volume() == pytest.approx(0.125, rel=1e-6)


def test_single_body_mesh_passthrough_exact():
    a = box_mesh((0, 0, 0), 1.0)
    field = apply_boolean(None, a, BooleanOp.NEW_BODY)
    assert field.to_mesh() is a


# --- document execution ----------------------------------------------------------------------

def test_execute_single_square_doc():
    solid, status = execute_document(square_doc())
    assert status.ok
    assert solid.volume() == pytest.approx(2.0, abs=1e-6)


def test_execute_open_profile_fails_at_part():
    sk = Sketch(SketchPlane(), (Line("l0", (0, 0), (1, 0)), Line("l1", (1, 0), (1, 1))))
    doc = Document((Part(sk, LinearExtrusion((0, 0, 1), 1.0)),))
    solid, status = execute_document(doc)
    assert not status.ok
    assert status.failed_part == 0
    assert status.error_code == "OPEN_PROFILE"


def test_execute_base_minus_cylinder():
    base = Part(square_sketch(side=2.0), LinearExtrusion((0, 0, 1), 1.0))
    hole = Part(Sketch(SketchPlane(), (Circle("c0", (1.0, 1.0), 0.4),)),
                LinearExtrusion((0, 0, 1), 1.0), BooleanOp.SUBTRACT)
    solid, status = execute_document(Document((base, hole)), grid=192)
    assert status.ok
    expected = 4.0 - math.pi * 0.16
    assert solid.volume() == pytest.approx(expected, rel=0.02)


def test_multi_outer_sketch_extrudes_both():
    sk = Sketch(SketchPlane(), (*square_lines(0, 0, 1, "a"), *square_lines(3, 0, 1, "b")))
    mesh = execute_part(Part(sk, LinearExtrusion((0, 0, 1), 1.0)))
    assert mesh.is_watertight()
    assert mesh.volume() == pytest.approx(2.0, abs=1e-6)


# --- mesh / STL / XYZ -------------------------------------------------------------------------

def test_watertight_detects_open_mesh():
    tri = Mesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
    assert not tri.is_watertight()


def test_stl_round_trip_volume(tmp_path):
    mesh = box_mesh((0, 0, 0), 1.0)
    path = str(tmp_path / "cube.stl")
    write_stl(mesh, path)
    back = read_stl(path)
    assert back.volume() == pytest.approx(1.0, rel=1e-5)
    assert back.is_watertight()


def test_stl_buffer_header_and_count():
    mesh = box_mesh((0, 0, 0), 1.0)
    buf = io.BytesIO()
    write_stl(mesh, buf)
    raw = buf.getvalue()
    assert len(raw) == 84 + 50 * mesh.n_faces
    import struct
    assert struct.unpack_from("<I", raw, 80)[0] == mesh.n_faces


def test_xyz_round_trip(tmp_path, rng):
    pts = rng.uniform(-1, 1, size=(100, 3))
    path = str(tmp_path / "pts.xyz")
    write_xyz(pts, path)
    back = read_xyz(path)
    assert np.allclose(back, pts, atol=1e-8)


def test_surface_sampling_deterministic():
    mesh = box_mesh((0, 0, 0), 1.0)
    a = mesh.sample_surface(500, np.random.default_rng(7))
    b = mesh.sample_surface(500, np.random.default_rng(7))
    assert np.array_equal(a, b)
    lo, hi = mesh.bounds()
    assert np.all(a >= lo - 1e-12) and np.all(a <= hi + 1e-12)
