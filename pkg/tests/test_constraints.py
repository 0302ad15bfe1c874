"""Residual semantics per kind, analytic-vs-FD Jacobians, and the edit solver."""

import math

import numpy as np
import pytest

from conftest import make_arc, square_lines
from histcad.constraints import (ResidualSystem, check_satisfied,
                                 constraint_residual, solve)
from histcad.errors import InfeasibleError, UndefinedResidualError
from histcad.model import (Anchor, Arc, Circle, Constraint, ConstraintKind,
                           ConstraintRef, Line, Sketch, SketchPlane)


def sk(*prims, cons=()):
    return Sketch(SketchPlane(), tuple(prims), tuple(cons))


def c(kind, *refs, pin=None):
    return Constraint(kind, tuple(refs), pin)


def ref(pid, anchor=Anchor.WHOLE):
    return ConstraintRef(pid, anchor)


K = ConstraintKind


# --- zero-residual characterization: satisfying and violating per kind -------------

SAT_VIOL_CASES = []


def _case(kind, sat_sketch, sat_con, viol_sketch, viol_con):
    SAT_VIOL_CASES.append((kind, sat_sketch, sat_con, viol_sketch, viol_con))


_case(K.COINCIDENT,
      sk(Line("a", (0, 0), (1, 0)), Line("b", (1, 0), (1, 1))),
      c(K.COINCIDENT, ref("a", Anchor.END), ref("b", Anchor.START)),
      sk(Line("a", (0, 0), (1, 0)), Line("b", (1.2, 0), (1, 1))),
      c(K.COINCIDENT, ref("a", Anchor.END), ref("b", Anchor.START)))
_case(K.PARALLEL,
      sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 1), (1, 1))),
      c(K.PARALLEL, ref("a"), ref("b")),
      sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 1), (1, 2))),
      c(K.PARALLEL, ref("a"), ref("b")))
_case(K.PERPENDICULAR,
      sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 0), (0, 1))),
      c(K.PERPENDICULAR, ref("a"), ref("b")),
      sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 0), (1, 1))),
      c(K.PERPENDICULAR, ref("a"), ref("b")))
_case(K.HORIZONTAL,
      sk(Line("a", (0, 0), (1, 0))), c(K.HORIZONTAL, ref("a")),
      sk(Line("a", (0, 0), (1, 0.3))), c(K.HORIZONTAL, ref("a")))
_case(K.VERTICAL,
      sk(Line("a", (0, 0), (0, 1))), c(K.VERTICAL, ref("a")),
      sk(Line("a", (0, 0), (0.3, 1))), c(K.VERTICAL, ref("a")))
_case(K.TANGENT,
      sk(Line("a", (-1, 1), (1, 1)), Circle("c", (0, 0), 1.0)),
      c(K.TANGENT, ref("a"), ref("c")),
      sk(Line("a", (-1, 1.5), (1, 1.5)), Circle("c", (0, 0), 1.0)),
      c(K.TANGENT, ref("a"), ref("c")))
_case(K.EQUAL,
      sk(Circle("c1", (0, 0), 0.7), Circle("c2", (3, 0), 0.7)),
      c(K.EQUAL, ref("c1"), ref("c2")),
      sk(Circle("c1", (0, 0), 0.7), Circle("c2", (3, 0), 0.9)),
      c(K.EQUAL, ref("c1"), ref("c2")))
_case(K.CONCENTRIC,
      sk(Circle("c1", (0, 0), 0.5), Circle("c2", (0, 0), 1.0)),
      c(K.CONCENTRIC, ref("c1"), ref("c2")),
      sk(Circle("c1", (0, 0), 0.5), Circle("c2", (0.1, 0), 1.0)),
      c(K.CONCENTRIC, ref("c1"), ref("c2")))
_case(K.FIX,
      sk(Line("a", (0, 0), (1, 0))), c(K.FIX, ref("a"), pin=(0, 0, 1, 0)),
      sk(Line("a", (0, 0.2), (1, 0))), c(K.FIX, ref("a"), pin=(0, 0, 1, 0)))
_case(K.NORMAL,
      sk(Line("a", (1, 0), (2, 0)), Circle("c", (0, 0), 1.0)),
      c(K.NORMAL, ref("a"), ref("c")),
      sk(Line("a", (1, 0), (1, 1)), Circle("c", (0, 0), 1.0)),
      c(K.NORMAL, ref("a"), ref("c")))


@pytest.mark.parametrize("kind,sat_sk,sat_c,viol_sk,viol_c", SAT_VIOL_CASES,
                         ids=[k.value for k, *_ in SAT_VIOL_CASES])
def test_zero_residual_characterization(kind, sat_sk, sat_c, viol_sk, viol_c):
    r_sat = constraint_residual(sat_c, sat_sk)
    assert np.max(np.abs(r_sat)) < 1e-12
    r_viol = constraint_residual(viol_c, viol_sk)
    assert np.max(np.abs(r_viol)) > 0.0


def test_parallel_horizontal_pair_zero():
    s = sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 1), (1, 1)))
    r = constraint_residual(c(K.PARALLEL, ref("a"), ref("b")), s)
    assert abs(r[0]) == 0.0


def test_tangent_line_circle_value():
    s = sk(Line("a", (-1, 1), (1, 1)), Circle("c", (0, 0), 1.0))
    r = constraint_residual(c(K.TANGENT, ref("a"), ref("c")), s)
    assert r[0] == pytest.approx(0.0, abs=1e-15)


def test_concentric_residual_is_center_distance():
    s = sk(Circle("c1", (0, 0), 1.0), Circle("c2", (0.1, 0), 1.0))
    r = constraint_residual(c(K.CONCENTRIC, ref("c1"), ref("c2")), s)
    assert r[0] == pytest.approx(0.1, abs=1e-15)


def test_perpendicular_residual_cos45():
    s = sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 0), (1, 1)))
    r = constraint_residual(c(K.PERPENDICULAR, ref("a"), ref("b")), s)
    # oracle: dot of unit directions computed independently
    ua = np.array([1.0, 0.0])
    ub = np.array([1.0, 1.0]) / math.sqrt(2.0)
    assert r[0] == pytest.approx(float(ua @ ub), abs=1e-15)
    assert r[0] == pytest.approx(math.cos(math.pi / 4), abs=1e-12)


def test_tangent_circle_circle_branches():
    ext = sk(Circle("c1", (0, 0), 1.0), Circle("c2", (3, 0), 2.0))
    r = constraint_residual(c(K.TANGENT, ref("c1"), ref("c2")), ext)
    assert abs(r[0]) < 1e-12  # externally tangent: |c1-c2| = r1 + r2
    internal = sk(Circle("c1", (0, 0), 1.0), Circle("c2", (1, 0), 2.0))
    r = constraint_residual(c(K.TANGENT, ref("c1"), ref("c2")), internal)
    assert abs(r[0]) < 1e-12  # internally tangent: |c1-c2| = |r1 - r2|


def test_arc_anchors_and_equal_radius():
    a1 = make_arc("a1", (0, 0), 2.0, 0.1, 0.7, 1.4)
    a2 = make_arc("a2", (5, 0), 2.0, 0.2, 1.0, 2.0)
    s = sk(a1, a2)
    r = constraint_residual(c(K.EQUAL, ref("a1"), ref("a2")), s)
    assert abs(r[0]) < 1e-12
    r2 = constraint_residual(c(K.CONCENTRIC, ref("a1"), ref("a2")), s)
    assert r2[0] == pytest.approx(5.0, rel=1e-12)


def test_undefined_residual_degenerate_line():
    s = sk(Line("a", (0, 0), (0, 0)), Line("b", (0, 1), (1, 1)))
    with pytest.raises(UndefinedResidualError):
        constraint_residual(c(K.PARALLEL, ref("a"), ref("b")), s)


# --- check_satisfied ------------------------------------------------------------------

def _square_with_constraints():
    lines = square_lines()
    cons = []
    for i in range(4):
        cons.append(c(K.COINCIDENT, ref(f"l{i}", Anchor.END),
                      ref(f"l{(i + 1) % 4}", Anchor.START)))
    cons += [c(K.HORIZONTAL, ref("l0")), c(K.VERTICAL, ref("l1")),
             c(K.HORIZONTAL, ref("l2")), c(K.VERTICAL, ref("l3"))]
    return Sketch(SketchPlane(), lines, tuple(cons))


def test_check_satisfied_consistent_fixture():
    report = check_satisfied(_square_with_constraints(), 1e-6)
    assert report.all_passed


def test_check_satisfied_perturbed_coincident():
    s = _square_with_constraints()
    prims = list(s.primitives)
    prims[1] = Line("l1", (1.01, 0), (1, 1))  # start moved by 0.01
    report = check_satisfied(Sketch(s.plane, tuple(prims), s.constraints), 1e-6)
    failing = [ch for ch in report.checks if not ch.passed]
    assert failing
    assert any(ch.max_abs == pytest.approx(0.01, abs=1e-12) for ch in failing)


def test_check_satisfied_empty_vacuous():
    report = check_satisfied(sk(Line("a", (0, 0), (1, 0))), 1e-6)
    assert report.all_passed and report.checks == ()


# --- Jacobian vs central finite differences ----------------------------------------------

def fd_jacobian(system: ResidualSystem, x: np.ndarray, step: float) -> np.ndarray:
    out = np.zeros((system.n_residuals, system.n_vars))
    for k in range(system.n_vars):
        xp = x.copy()
        xm = x.copy()
        xp[k] += step
        xm[k] -= step
        out[:, k] = (system.residuals(xp) - system.residuals(xm)) / (2 * step)
    return out


def random_nondegenerate_sketch(rng) -> Sketch:
    prims = [
        Line("a", tuple(rng.uniform(-2, 2, 2)), tuple(rng.uniform(-2, 2, 2))),
        Line("b", tuple(rng.uniform(-2, 2, 2)), tuple(rng.uniform(-2, 2, 2))),
        Circle("c", tuple(rng.uniform(-2, 2, 2)), float(rng.uniform(0.5, 1.5))),
        make_arc("d", tuple(rng.uniform(-2, 2, 2)), float(rng.uniform(0.8, 1.5)),
                 0.2, 1.1, 2.2),
    ]
    # reject nearly-degenerate lines so directions stay well-conditioned
    for p in prims[:2]:
        if math.dist(p.start, p.end) < 0.3:
            return random_nondegenerate_sketch(rng)
    cons = [
        c(K.COINCIDENT, ref("a", Anchor.END), ref("b", Anchor.START)),
        c(K.PARALLEL, ref("a"), ref("b")),
        c(K.PERPENDICULAR, ref("a"), ref("b")),
        c(K.HORIZONTAL, ref("a")),
        c(K.VERTICAL, ref("b")),
        c(K.TANGENT, ref("a"), ref("c")),
        c(K.TANGENT, ref("c"), ref("d")),
        c(K.EQUAL, ref("a"), ref("b")),
        c(K.EQUAL, ref("c"), ref("d")),
        c(K.CONCENTRIC, ref("c"), ref("d")),
        c(K.NORMAL, ref("b"), ref("c")),
        c(K.FIX, ref("a"), pin=(0.0, 0.0, 1.0, 1.0)),
    ]
    s = Sketch(SketchPlane(), tuple(prims), tuple(cons))
    # avoid kink neighborhoods: tangent sign flips and normal endpoint ties
    sys_probe = ResidualSystem(s)
    try:
        r = sys_probe.residuals(sys_probe.x0)
    except UndefinedResidualError:
        return random_nondegenerate_sketch(rng)
    if np.min(np.abs(r)) < 1e-3:
        return random_nondegenerate_sketch(rng)
    return s


def test_jacobian_matches_finite_differences(rng):
    for _ in range(100):
        s = random_nondegenerate_sketch(rng)
        system = ResidualSystem(s)
        x = system.x0
        scale = max(1.0, float(np.max(np.abs(x))))
        ja = system.jacobian(x).toarray()
        jf = fd_jacobian(system, x, 1e-6 * scale)
        denom = np.maximum(np.maximum(np.abs(ja), np.abs(jf)), 1.0)
        assert np.max(np.abs(ja - jf) / denom) < 1e-5


def test_concentric_jacobian_along_axis():
    s = sk(Circle("c1", (0.1, 0), 1.0), Circle("c2", (0, 0), 1.0),
           cons=[c(K.CONCENTRIC, ref("c1"), ref("c2"))])
    system = ResidualSystem(s)
    j = system.jacobian(system.x0).toarray()
    # derivative of center distance wrt c1.center.x at offset 0.1 along x
    assert j[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert j[0, 3] == pytest.approx(-1.0, abs=1e-12)


def test_parallel_jacobian_finite_at_parallel():
    s = sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 1), (1, 1)),
           cons=[c(K.PARALLEL, ref("a"), ref("b"))])
    system = ResidualSystem(s)
    x = system.x0
    ja = system.jacobian(x).toarray()
    assert np.all(np.isfinite(ja))
    jf = fd_jacobian(system, x, 1e-6)
    denom = np.maximum(np.maximum(np.abs(ja), np.abs(jf)), 1.0)
    assert np.max(np.abs(ja - jf) / denom) < 1e-5


def test_zero_perturbation_zero_directional_derivative():
    s = _square_with_constraints()
    system = ResidualSystem(s)
    j = system.jacobian(system.x0)
    assert np.allclose(j @ np.zeros(system.n_vars), 0.0)


# --- solver --------------------------------------------------------------------------

def test_solve_equal_radius_pin():
    s = sk(Circle("c1", (0, 0), 1.0), Circle("c2", (0, 0), 1.5),
           cons=[c(K.CONCENTRIC, ref("c1"), ref("c2")),
                 c(K.EQUAL, ref("c1"), ref("c2"))])
    out = solve(s, {"c1.radius": 2.0})
    assert out.report.converged
    assert out.sketch.get("c1").radius == pytest.approx(2.0, abs=1e-12)
    assert out.sketch.get("c2").radius == pytest.approx(2.0, abs=1e-8)
    assert check_satisfied(out.sketch, 1e-6).all_passed


def test_solve_moved_corner_stays_rectangle():
    s = _square_with_constraints()
    out = solve(s, {"l0.start.x": 0.5, "l0.start.y": 0.0})
    assert out.report.converged
    assert out.report.max_residual <= 1e-8
    solved = out.sketch
    assert check_satisfied(solved, 1e-6).all_passed
    # corner pinned where requested; opposite (right) side translated intact
    assert solved.get("l0").start == pytest.approx((0.5, 0.0))
    xs = {solved.get("l0").end[0], solved.get("l1").start[0], solved.get("l1").end[0]}
    assert max(xs) == pytest.approx(1.0, abs=1e-6)
    # all four sides still axis-aligned: it remains a rectangle
    for lid in ("l0", "l2"):
        line = solved.get(lid)
        assert line.start[1] == pytest.approx(line.end[1], abs=1e-8)
    for lid in ("l1", "l3"):
        line = solved.get(lid)
        assert line.start[0] == pytest.approx(line.end[0], abs=1e-8)


def test_solve_contradiction_infeasible():
    s = sk(Line("a", (0, 0), (1, 0)),
           cons=[c(K.HORIZONTAL, ref("a")), c(K.VERTICAL, ref("a"))])
    with pytest.raises(InfeasibleError):
        solve(s)


def test_solve_unconstrained_vars_move_minimally():
    s = sk(Line("a", (0, 0), (1, 0)), Line("far", (10, 10), (11, 10)),
           cons=[c(K.HORIZONTAL, ref("a"))])
    out = solve(s, {"a.start.y": 0.2})
    far = out.sketch.get("far")
    assert far.start == pytest.approx((10, 10), abs=1e-9)
    assert far.end == pytest.approx((11, 10), abs=1e-9)


def test_fixed_primitive_excluded_from_variables():
    s = sk(Line("a", (0, 0), (1, 0)), Line("b", (0, 1), (1, 1)),
           cons=[c(K.FIX, ref("a")), c(K.PARALLEL, ref("a"), ref("b"))])
    system = ResidualSystem(s)
    assert system.n_vars == 4  # only b's parameters remain free


def test_solver_reports_iterations_and_residual():
    s = sk(Circle("c1", (0, 0), 1.0), Circle("c2", (0.5, 0), 1.5),
           cons=[c(K.CONCENTRIC, ref("c1"), ref("c2"))])
    out = solve(s)
    assert out.report.converged
    assert out.report.iterations >= 1
    assert out.report.max_residual <= out.report.tol
