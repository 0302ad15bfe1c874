"""Residual semantics, satisfaction checking, and the parametric edit solver.

Each constraint kind maps to one or more smooth residual components that
vanish exactly at satisfaction (non-smooth only at documented degeneracies:
the tangent absolute-value kink, concentric at zero distance, and the
normal-constraint endpoint choice). Residuals are expressed over the full
primitive-parameter vector of a sketch; FIX-ed primitives and solver pins
are excluded from the free variables.

The solver is damped least squares (Levenberg-Marquardt, lambda starting at
1e-3, x10 on a rejected step, /10 on success) over stacked constraint
residuals plus a weight-1e-6 regularization toward the initial values so
unconstrained parameters move minimally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InfeasibleError, UndefinedResidualError
from .model import (Anchor, Arc, Circle, Constraint, ConstraintKind,
                    ConstraintRef, Line, Primitive, Sketch,
                    sketch_sample_points)

LM_LAMBDA0 = 1e-3
LM_MAX_ITER = 200
REG_WEIGHT = 1e-6
CONVERGENCE_REL = 1e-8

_PARAM_NAMES = {
    "line": ("start.x", "start.y", "end.x", "end.y"),
    "circle": ("center.x", "center.y", "radius"),
    "arc": ("start.x", "start.y", "mid.x", "mid.y", "end.x", "end.y"),
}


def primitive_params(p: Primitive) -> np.ndarray:
    if isinstance(p, Line):
        return np.array([*p.start, *p.end], dtype=float)
    if isinstance(p, Circle):
        return np.array([*p.center, p.radius], dtype=float)
    return np.array([*p.start, *p.mid, *p.end], dtype=float)


def primitive_from_params(p: Primitive, q: np.ndarray) -> Primitive:
    if isinstance(p, Line):
        return Line(p.id, (q[0], q[1]), (q[2], q[3]))
    if isinstance(p, Circle):
        return Circle(p.id, (q[0], q[1]), float(q[2]))
    return Arc(p.id, (q[0], q[1]), (q[2], q[3]), (q[4], q[5]))


def parse_var_path(sketch: Sketch, path: str) -> tuple[str, int]:
    """Resolve "``<id>.<field>[.<coord>]``" into (primitive id, param offset)."""
    pid, _, rest = path.partition(".")
    prim = sketch.primitive_map().get(pid)
    if prim is None:
        raise KeyError(f"unknown primitive {pid!r} in variable path {path!r}")
    names = _PARAM_NAMES[prim.kind]
    if rest not in names:
        raise KeyError(f"unknown parameter {rest!r} for {prim.kind} (try one of {names})")
    return pid, names.index(rest)


# --- per-primitive evaluation contexts -----------------------------------------

_D_LINE_ENDS = np.array([[-1.0, 0.0, 1.0, 0.0], [0.0, -1.0, 0.0, 1.0]])


class _PrimCtx:
    """Values and analytic partials of derived quantities of one primitive."""

    def __init__(self, prim: Primitive, q: np.ndarray):
        self.prim = prim
        self.kind = prim.kind
        self.q = q
        self.n = len(q)

    def point(self, anchor: Anchor) -> tuple[np.ndarray, np.ndarray]:
        k = self.kind
        if anchor == Anchor.START and k in ("line", "arc"):
            return self.q[0:2], np.eye(2, self.n, 0)
        if anchor == Anchor.END:
            if k == "line":
                return self.q[2:4], np.eye(2, self.n, 2)
            if k == "arc":
                return self.q[4:6], np.eye(2, self.n, 4)
        if anchor == Anchor.CENTER:
            return self.center()
        raise UndefinedResidualError(f"anchor {anchor.value} undefined for {k}")

    def direction(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind != "line":
            raise UndefinedResidualError("direction requires a line")
        d = self.q[2:4] - self.q[0:2]
        length = math.hypot(d[0], d[1])
        scale = max(1.0, float(np.max(np.abs(self.q))))
        if length <= 1e-12 * scale:
            raise UndefinedResidualError(f"line {self.prim.id!r} is degenerate")
        u = d / length
        j_u = ((np.eye(2) - np.outer(u, u)) / length) @ _D_LINE_ENDS
        return u, j_u

    def length(self) -> tuple[float, np.ndarray]:
        u, _ = self.direction()
        d = self.q[2:4] - self.q[0:2]
        return math.hypot(d[0], d[1]), np.array([-u[0], -u[1], u[0], u[1]])

    def center(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "circle":
            return self.q[0:2], np.eye(2, 3, 0)
        if self.kind == "arc":
            c, dc, _, _ = self._arc_geometry()
            return c, dc
        raise UndefinedResidualError("center requires a circular primitive")

    def radius(self) -> tuple[float, np.ndarray]:
        if self.kind == "circle":
            return float(self.q[2]), np.array([0.0, 0.0, 1.0])
        if self.kind == "arc":
            _, _, r, dr = self._arc_geometry()
            return r, dr
        raise UndefinedResidualError("radius requires a circular primitive")

    def _arc_geometry(self):
        q = self.q
        p0, pm, p1 = q[0:2], q[2:4], q[4:6]
        a_mat = 2.0 * np.array([[pm[0] - p0[0], pm[1] - p0[1]],
                                [p1[0] - p0[0], p1[1] - p0[1]]])
        b = np.array([pm @ pm - p0 @ p0, p1 @ p1 - p0 @ p0])
        det = a_mat[0, 0] * a_mat[1, 1] - a_mat[0, 1] * a_mat[1, 0]
        scale = max(1.0, float(np.max(np.abs(q))))
        if abs(det) <= 1e-12 * scale * scale:
            raise UndefinedResidualError(f"arc {self.prim.id!r} points are collinear")
        c = np.linalg.solve(a_mat, b)

        db = np.array([
            [-2 * p0[0], -2 * p0[1], 2 * pm[0], 2 * pm[1], 0.0, 0.0],
            [-2 * p0[0], -2 * p0[1], 0.0, 0.0, 2 * p1[0], 2 * p1[1]],
        ])
        da = [
            2.0 * np.array([[-1.0, 0.0], [-1.0, 0.0]]),
            2.0 * np.array([[0.0, -1.0], [0.0, -1.0]]),
            2.0 * np.array([[1.0, 0.0], [0.0, 0.0]]),
            2.0 * np.array([[0.0, 1.0], [0.0, 0.0]]),
            2.0 * np.array([[0.0, 0.0], [1.0, 0.0]]),
            2.0 * np.array([[0.0, 0.0], [0.0, 1.0]]),
        ]
        dc = np.empty((2, 6))
        for k in range(6):
            dc[:, k] = np.linalg.solve(a_mat, db[:, k] - da[k] @ c)

        v = c - p0
        r = math.hypot(v[0], v[1])
        u_hat = v / r
        dp0 = np.eye(2, 6, 0)
        dr = u_hat @ (dc - dp0)
        return c, dc, r, dr


# --- per-kind residual evaluation ------------------------------------------------

def _is_circular(ctx: _PrimCtx) -> bool:
    return ctx.kind in ("circle", "arc")


def _eval_constraint(c: Constraint, ctxs: Sequence[_PrimCtx],
                     pin: Optional[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Residual vector and its Jacobian over the refs' concatenated params."""
    k = c.kind
    ns = [ctx.n for ctx in ctxs]
    total = sum(ns)

    def wide(j_local: np.ndarray, which: int) -> np.ndarray:
        j_local = np.atleast_2d(j_local)
        out = np.zeros((j_local.shape[0], total))
        off = sum(ns[:which])
        out[:, off:off + ns[which]] = j_local
        return out

    if k == ConstraintKind.COINCIDENT:
        pa, ja = ctxs[0].point(c.refs[0].anchor)
        pb, jb = ctxs[1].point(c.refs[1].anchor)
        return pa - pb, wide(ja, 0) - wide(jb, 1)

    if k == ConstraintKind.PARALLEL:
        u1, j1 = ctxs[0].direction()
        u2, j2 = ctxs[1].direction()
        r = u1[0] * u2[1] - u1[1] * u2[0]
        dr1 = np.array([u2[1], -u2[0]]) @ j1
        dr2 = np.array([-u1[1], u1[0]]) @ j2
        return np.array([r]), wide(dr1, 0) + wide(dr2, 1)

    if k == ConstraintKind.PERPENDICULAR:
        u1, j1 = ctxs[0].direction()
        u2, j2 = ctxs[1].direction()
        return np.array([u1 @ u2]), wide(u2 @ j1, 0) + wide(u1 @ j2, 1)

    if k == ConstraintKind.HORIZONTAL:
        u, j = ctxs[0].direction()
        return np.array([u[1]]), wide(j[1], 0)

    if k == ConstraintKind.VERTICAL:
        u, j = ctxs[0].direction()
        return np.array([u[0]]), wide(j[0], 0)

    if k == ConstraintKind.TANGENT:
        return _eval_tangent(ctxs, wide)

    if k == ConstraintKind.EQUAL:
        if ctxs[0].kind == "line":
            v1, j1 = ctxs[0].length()
            v2, j2 = ctxs[1].length()
        else:
            v1, j1 = ctxs[0].radius()
            v2, j2 = ctxs[1].radius()
        return np.array([v1 - v2]), wide(j1, 0) - wide(j2, 1)

    if k == ConstraintKind.CONCENTRIC:
        c1, j1 = ctxs[0].center()
        c2, j2 = ctxs[1].center()
        v = c1 - c2
        dist = math.hypot(v[0], v[1])
        if dist <= 1e-300:
            return np.array([0.0]), np.zeros((1, total))
        u_hat = v / dist
        return np.array([dist]), wide(u_hat @ j1, 0) - wide(u_hat @ j2, 1)

    if k == ConstraintKind.FIX:
        q = ctxs[0].q
        ref = pin if pin is not None else q
        return q - ref, wide(np.eye(len(q)), 0)

    if k == ConstraintKind.NORMAL:
        return _eval_normal(ctxs, wide)

    raise UndefinedResidualError(f"unknown constraint kind {k}")


def _eval_tangent(ctxs, wide):
    a, b = ctxs
    if a.kind == "line" or b.kind == "line":
        line, curve = (a, b) if a.kind == "line" else (b, a)
        li = 0 if a.kind == "line" else 1
        ci = 1 - li
        u, ju = line.direction()
        p0, jp0 = line.point(Anchor.START)
        cc, jc = curve.center()
        rad, jr = curve.radius()
        w = cc - p0
        s = u[0] * w[1] - u[1] * w[0]
        sign = 1.0 if s >= 0 else -1.0
        ds_line = np.array([w[1], -w[0]]) @ ju + np.array([u[1], -u[0]]) @ jp0
        ds_curve = np.array([-u[1], u[0]]) @ jc
        r = abs(s) - rad
        return np.array([r]), wide(sign * ds_line, li) + wide(sign * ds_curve - jr, ci)

    c1, j1 = a.center()
    r1, jr1 = a.radius()
    c2, j2 = b.center()
    r2, jr2 = b.radius()
    v = c1 - c2
    dist = math.hypot(v[0], v[1])
    q_ext = dist - (r1 + r2)
    q_int = dist - abs(r1 - r2)
    use_ext = abs(q_ext) <= abs(q_int)
    if dist <= 1e-300:
        dd1 = np.zeros(a.n)
        dd2 = np.zeros(b.n)
    else:
        u_hat = v / dist
        dd1 = u_hat @ j1
        dd2 = -(u_hat @ j2)
    if use_ext:
        return np.array([q_ext]), wide(dd1 - jr1, 0) + wide(dd2 - jr2, 1)
    sgn = 1.0 if r1 >= r2 else -1.0
    return np.array([q_int]), wide(dd1 - sgn * jr1, 0) + wide(dd2 + sgn * jr2, 1)


def _eval_normal(ctxs, wide):
    a, b = ctxs
    line, curve = (a, b) if a.kind == "line" else (b, a)
    li = 0 if a.kind == "line" else 1
    ci = 1 - li
    cc, jc = curve.center()
    rad, _ = curve.radius()
    # endpoint nearer the curve boundary is the contact-side end of the line
    cand = []
    for anchor in (Anchor.START, Anchor.END):
        e, _ = line.point(anchor)
        cand.append((abs(math.hypot(*(e - cc)) - rad), anchor))
    anchor = min(cand)[1]
    e, je = line.point(anchor)
    u, ju = line.direction()
    v = e - cc
    dist = math.hypot(v[0], v[1])
    scale = max(1.0, float(np.max(np.abs(line.q))), float(np.max(np.abs(curve.q))))
    if dist <= 1e-12 * scale:
        raise UndefinedResidualError("normal constraint: line endpoint at curve center")
    e_hat = v / dist
    r = e_hat[0] * u[1] - e_hat[1] * u[0]
    d_ehat = (np.eye(2) - np.outer(e_hat, e_hat)) / dist
    dr_from_e = (np.array([u[1], -u[0]]) @ d_ehat) @ je
    dr_from_c = -(np.array([u[1], -u[0]]) @ d_ehat) @ jc
    dr_from_u = np.array([-e_hat[1], e_hat[0]]) @ ju
    return np.array([r]), wide(dr_from_e + dr_from_u, li) + wide(dr_from_c, ci)


# --- public single-constraint interface --------------------------------------------

def constraint_residual(c: Constraint, sketch: Sketch) -> np.ndarray:
    """Residual components of one constraint on the sketch's current geometry."""
    prim_map = sketch.primitive_map()
    ctxs = [_PrimCtx(prim_map[r.primitive], primitive_params(prim_map[r.primitive]))
            for r in c.refs]
    pin = np.asarray(c.pin, dtype=float) if c.pin is not None else None
    r, _ = _eval_constraint(c, ctxs, pin)
    return r


residual = constraint_residual


@dataclass(frozen=True)
class ConstraintCheck:
    constraint: Constraint
    residuals: tuple[float, ...]
    max_abs: float
    passed: bool


@dataclass(frozen=True)
class SatisfactionReport:
    checks: tuple[ConstraintCheck, ...]
    tol: float

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)


def check_satisfied(sketch: Sketch, tol: float) -> SatisfactionReport:
    checks = []
    for c in sketch.constraints:
        r = constraint_residual(c, sketch)
        m = float(np.max(np.abs(r))) if len(r) else 0.0
        checks.append(ConstraintCheck(c, tuple(float(v) for v in r), m, m <= tol))
    return SatisfactionReport(tuple(checks), tol)


# --- residual system over the whole sketch -------------------------------------------

class ResidualSystem:
    """Stacked residuals of a sketch over its free primitive parameters.

    Parameters of FIX-ed primitives and explicitly pinned parameters are held
    at fixed values and excluded from the variable vector x.
    """

    def __init__(self, sketch: Sketch, pins: Optional[dict[str, float]] = None):
        self.sketch = sketch
        self.prims = list(sketch.primitives)
        self.offsets: dict[str, int] = {}
        off = 0
        for p in self.prims:
            self.offsets[p.id] = off
            off += len(primitive_params(p))
        self.n_params = off

        self.p_full = np.concatenate([primitive_params(p) for p in self.prims]) \
            if self.prims else np.zeros(0)

        fixed = np.zeros(self.n_params, dtype=bool)
        self._pins: list[tuple[int, float]] = []
        for c in sketch.constraints:
            if c.kind == ConstraintKind.FIX and c.refs:
                pid = c.refs[0].primitive
                if pid in self.offsets:
                    o = self.offsets[pid]
                    n = len(primitive_params(sketch.primitive_map()[pid]))
                    fixed[o:o + n] = True
        for path, value in (pins or {}).items():
            pid, local = parse_var_path(sketch, path)
            idx = self.offsets[pid] + local
            fixed[idx] = True
            self._pins.append((idx, float(value)))
            self.p_full[idx] = float(value)

        self.free_idx = np.nonzero(~fixed)[0]
        self._col_of_param = -np.ones(self.n_params, dtype=int)
        self._col_of_param[self.free_idx] = np.arange(len(self.free_idx))

        self._entries = []
        self.dependency: dict[int, np.ndarray] = {}
        row = 0
        prim_map = sketch.primitive_map()
        for ci, c in enumerate(sketch.constraints):
            refs = [prim_map[r.primitive] for r in c.refs]
            cols = np.concatenate([
                np.arange(self.offsets[p.id], self.offsets[p.id] + len(primitive_params(p)))
                for p in refs])
            if c.pin is not None:
                pin = np.asarray(c.pin, float)
            elif c.kind == ConstraintKind.FIX:
                # snapshot the current parameters as the pinned values
                pin = self.p_full[cols][:len(primitive_params(refs[0]))].copy()
            else:
                pin = None
            n_out = _residual_size(c, refs)
            self._entries.append((c, refs, cols, pin, row, n_out))
            self.dependency[ci] = self._col_of_param[cols][self._col_of_param[cols] >= 0]
            row += n_out
        self.n_residuals = row

    @property
    def n_vars(self) -> int:
        return len(self.free_idx)

    @property
    def x0(self) -> np.ndarray:
        return self.p_full[self.free_idx].copy()

    def params_from_x(self, x: np.ndarray) -> np.ndarray:
        p = self.p_full.copy()
        p[self.free_idx] = x
        return p

    def residuals(self, x: np.ndarray) -> np.ndarray:
        p = self.params_from_x(x)
        out = np.empty(self.n_residuals)
        for c, refs, cols, pin, row, n_out in self._entries:
            ctxs = self._ctxs(refs, p)
            r, _ = _eval_constraint(c, ctxs, pin)
            out[row:row + n_out] = r
        return out

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        """Analytic Jacobian of the stacked residuals over the free variables."""
        p = self.params_from_x(x)
        rows, cols_out, vals = [], [], []
        for c, refs, cols, pin, row, n_out in self._entries:
            ctxs = self._ctxs(refs, p)
            r, j = _eval_constraint(c, ctxs, pin)
            free_cols = self._col_of_param[cols]
            for i in range(n_out):
                for k, fc in enumerate(free_cols):
                    if fc >= 0 and j[i, k] != 0.0:
                        rows.append(row + i)
                        cols_out.append(fc)
                        vals.append(j[i, k])
        return sp.csr_matrix((vals, (rows, cols_out)),
                             shape=(self.n_residuals, self.n_vars))

    def _ctxs(self, refs, p):
        out = []
        for prim in refs:
            o = self.offsets[prim.id]
            out.append(_PrimCtx(prim, p[o:o + len(primitive_params(prim))]))
        return out

    def sketch_from_x(self, x: np.ndarray) -> Sketch:
        p = self.params_from_x(x)
        prims = []
        for prim in self.prims:
            o = self.offsets[prim.id]
            prims.append(primitive_from_params(prim, p[o:o + len(primitive_params(prim))]))
        return Sketch(self.sketch.plane, tuple(prims), self.sketch.constraints)


def _residual_size(c: Constraint, refs: Sequence[Primitive]) -> int:
    if c.kind == ConstraintKind.COINCIDENT:
        return 2
    if c.kind == ConstraintKind.FIX:
        return len(primitive_params(refs[0]))
    return 1


def jacobian(system: ResidualSystem, x: np.ndarray) -> sp.csr_matrix:
    return system.jacobian(x)


# --- conflict detection and the solver --------------------------------------------------

_CONTRADICTORY_SAME_REFS = (
    frozenset({ConstraintKind.HORIZONTAL, ConstraintKind.VERTICAL}),
    frozenset({ConstraintKind.PARALLEL, ConstraintKind.PERPENDICULAR}),
)


def detect_conflicts(sketch: Sketch) -> list[str]:
    """Analytic contradictions over identical reference sets (closed table)."""
    by_refs: dict[tuple, set[ConstraintKind]] = {}
    for c in sketch.constraints:
        by_refs.setdefault(tuple(sorted(c.ref_ids())), set()).add(c.kind)
    out = []
    for refs, kinds in by_refs.items():
        for pair in _CONTRADICTORY_SAME_REFS:
            if pair <= kinds:
                names = " and ".join(sorted(k.value for k in pair))
                out.append(f"{names} on {refs} cannot both hold")
    return out


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    max_residual: float
    tol: float
    n_vars: int
    n_pins: int
    message: str = ""
    notes: tuple[str, ...] = ()


@dataclass
class SolveResult:
    sketch: Sketch
    report: SolveReport


def solve(sketch: Sketch, pins: Optional[dict[str, float]] = None,
          max_iter: int = LM_MAX_ITER) -> SolveResult:
    """Propagate pinned parameter edits while driving all residuals to zero.

    Raises INFEASIBLE when the conflict detector proves a contradiction; a
    non-converged run returns the best iterate with ``converged=False``.
    """
    conflicts = detect_conflicts(sketch)
    if conflicts:
        raise InfeasibleError("; ".join(conflicts))

    system = ResidualSystem(sketch, pins or {})
    pts = sketch_sample_points(sketch)
    extent = float(np.max(pts.max(axis=0) - pts.min(axis=0))) if len(pts) > 1 else 1.0
    tol = CONVERGENCE_REL * max(extent, 1e-12)

    x = system.x0
    x_init = x.copy()
    n = system.n_vars

    def full_residual(xv):
        r_c = system.residuals(xv)
        return np.concatenate([r_c, REG_WEIGHT * (xv - x_init)]), r_c

    r_full, r_c = full_residual(x)
    cost = 0.5 * float(r_full @ r_full)
    max_res = float(np.max(np.abs(r_c))) if len(r_c) else 0.0
    best = (x.copy(), max_res)
    lam = LM_LAMBDA0
    it = 0
    polish = 0
    while it < max_iter:
        if max_res <= tol:
            # a few extra polish steps push residuals toward machine precision
            if polish >= 3 or max_res <= tol * 1e-4:
                break
            polish += 1
        it += 1
        j_c = system.jacobian(x)
        j_full = sp.vstack([j_c, REG_WEIGHT * sp.eye(n, format="csr")], format="csr")
        h = (j_full.T @ j_full).toarray()
        g = j_full.T @ r_full
        stepped = False
        for _ in range(25):
            try:
                delta = np.linalg.solve(h + lam * np.eye(n), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + delta
            try:
                r_new_full, r_new_c = full_residual(x_new)
            except UndefinedResidualError:
                lam *= 10.0
                continue
            cost_new = 0.5 * float(r_new_full @ r_new_full)
            if cost_new < cost:
                x, r_full, r_c, cost = x_new, r_new_full, r_new_c, cost_new
                max_res = float(np.max(np.abs(r_c))) if len(r_c) else 0.0
                lam = max(lam / 10.0, 1e-15)
                stepped = True
                break
            lam *= 10.0
        if max_res < best[1]:
            best = (x.copy(), max_res)
        if not stepped:
            break  # stalled: lambda exhausted without improvement

    if best[1] < max_res:
        x, max_res = best
    converged = max_res <= tol
    notes = []
    if system._pins and system.n_residuals > system.n_vars:
        notes.append("over-pinned: more residual rows than free variables")
    report = SolveReport(
        converged=converged, iterations=it, max_residual=max_res, tol=tol,
        n_vars=n, n_pins=len(system._pins),
        message="converged" if converged else "NO_CONVERGENCE: best iterate returned",
        notes=tuple(notes))
    return SolveResult(system.sketch_from_x(x), report)
