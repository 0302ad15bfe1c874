"""FastAPI service wrapping the core pipeline.

Every endpoint is a thin route over a typed handler function; the CLI calls
the same handlers in-process when no remote server is configured, so both
surfaces share one code path. Handlers are pure (no shared mutable state),
which makes the service safe for concurrent clients.
"""

from __future__ import annotations

import base64
import io
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from . import schemas as S
from .analysis import analysis_to_dict, analyze_document
from .constraints import check_satisfied, solve
from .errors import FormatError, HistcadError
from .execute import execute_document
from .fields import DEFAULT_GRID
from .flatten import (add_auxiliary_constraints, flatten_sketch,
                      migrate_constraints, prune_constraints)
from .formats import import_hierarchical, parse_document, serialize_document
from .meshes import write_stl
from .metrics import CD_SAMPLES, batch_metrics
from .model import (Document, DocumentMetadata, Part, Sketch, Violation,
                    normalize_document, validate_document)
from .nlt import AnnotationTask, ChatEndpoint, annotate, build_nlt, build_prompt

API_KEY_ENV = "HISTCAD_API_KEY"


@dataclass
class ServiceSettings:
    """Transport and execution defaults; the API key comes from the environment."""

    endpoint: str = ""
    model: str = ""
    grid: int = DEFAULT_GRID
    api_key_env: str = API_KEY_ENV

    def transport(self, endpoint: Optional[str] = None, model: Optional[str] = None) -> ChatEndpoint:
        ep = endpoint or self.endpoint
        md = model or self.model
        if not ep:
            raise HistcadError("no chat endpoint configured (set endpoint in config or flags)")
        return ChatEndpoint(endpoint=ep, model=md or "default",
                            api_key=os.environ.get(self.api_key_env, ""))


def _parse(text: str, strict: bool, warnings: list[str]) -> Document:
    return parse_document(text, strict=strict, warnings=warnings)


# --- handlers (shared by HTTP routes and the embedded CLI client) ---------------

def handle_validate(req: S.ValidateRequest) -> S.ValidateResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    report = validate_document(doc)
    return S.ValidateResponse(
        valid=report.ok,
        violations=[S.ViolationModel(code=v.code, path=v.path, message=v.message)
                    for v in report.violations],
        warnings=warnings)


def handle_normalize(req: S.NormalizeRequest) -> S.NormalizeResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    return S.NormalizeResponse(document=serialize_document(
        normalize_document(doc, req.target_extent)))


def handle_flatten(req: S.FlattenRequest) -> S.FlattenResponse:
    warnings: list[str] = []
    sketches, extrusions, booleans = import_hierarchical(req.hier, strict=req.strict,
                                                         warnings=warnings)
    parts = []
    prune_log: list[str] = []
    for i, hier_sketch in enumerate(sketches):
        result = flatten_sketch(hier_sketch)
        migrated = migrate_constraints(hier_sketch.constraints, result)
        sketch = Sketch(result.sketch.plane, result.sketch.primitives, tuple(migrated))
        aux = add_auxiliary_constraints(sketch, result.provenance)
        sketch = Sketch(sketch.plane, sketch.primitives, tuple([*sketch.constraints, *aux]))
        pruned = prune_constraints(sketch)
        for entry in pruned.removed:
            prune_log.append(
                f"sketch {i}: dropped {entry.constraint.kind.value} on "
                f"{entry.constraint.ref_ids()}: {entry.reason}")
        parts.append(Part(pruned.sketch, extrusions[i], booleans[i]))
    doc = Document(tuple(parts), DocumentMetadata(source="hier-import"))
    return S.FlattenResponse(document=serialize_document(doc), prune_log=prune_log,
                             warnings=warnings)


def handle_analyze(req: S.AnalyzeRequest) -> S.AnalyzeResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    return S.AnalyzeResponse(analysis=analysis_to_dict(analyze_document(doc)))


def handle_execute(req: S.ExecuteRequest, settings: ServiceSettings) -> S.ExecuteResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    grid = req.grid or settings.grid
    solid, status = execute_document(doc, grid=grid)
    resp = S.ExecuteResponse(ok=status.ok, failed_part=status.failed_part,
                             error_code=status.error_code, message=status.message)
    if status.ok and not solid.is_empty:
        mesh = solid.to_mesh()
        resp.volume = mesh.volume()
        resp.watertight = mesh.is_watertight()
        resp.n_triangles = mesh.n_faces
        if req.include_mesh:
            buf = io.BytesIO()
            write_stl(mesh, buf)
            resp.stl_base64 = base64.b64encode(buf.getvalue()).decode("ascii")
        if req.include_points:
            rng = np.random.default_rng(0)
            pts = mesh.sample_surface(req.samples, rng)
            resp.points_xyz = "".join(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n" for p in pts)
    return resp


def handle_edit(req: S.EditRequest, settings: ServiceSettings) -> S.EditResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    if not 0 <= req.part < len(doc.parts):
        raise HistcadError(f"part index {req.part} out of range")
    part = doc.parts[req.part]
    result = solve(part.sketch, req.pins)
    tol = req.tol if req.tol is not None else 1e-6
    sat = check_satisfied(result.sketch, tol)
    parts = list(doc.parts)
    parts[req.part] = Part(result.sketch, part.extrusion, part.boolean)
    new_doc = Document(tuple(parts), doc.metadata)
    return S.EditResponse(
        document=serialize_document(new_doc), converged=result.report.converged,
        iterations=result.report.iterations, max_residual=result.report.max_residual,
        tol=tol, all_satisfied=sat.all_passed, notes=list(result.report.notes))


def handle_nlt(req: S.NltRequest) -> S.NltResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    return S.NltResponse(nlt=build_nlt(doc))


def handle_prompt(req: S.PromptRequest) -> S.PromptResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    nlt_text = build_nlt(doc)
    task = AnnotationTask(req.task)
    return S.PromptResponse(prompt=build_prompt(nlt_text, task,
                                                multi_part=len(doc.parts) > 1))


def handle_annotate(req: S.AnnotateRequest, settings: ServiceSettings) -> S.AnnotateResponse:
    warnings: list[str] = []
    doc = _parse(req.document, req.strict, warnings)
    task = AnnotationTask(req.task)
    transport = settings.transport(req.endpoint, req.model)
    record = annotate(doc, task, transport)
    return S.AnnotateResponse(annotation=record.annotation, task=record.task,
                              model=record.model, request_hash=record.request_hash,
                              timestamp=record.timestamp)


def handle_eval(req: S.EvalRequest, settings: ServiceSettings) -> S.EvalResponse:
    docs = []
    for text in req.documents:
        docs.append(_parse(text, req.strict, []))
    references = None
    if req.references is not None:
        references = []
        for ref in req.references:
            if ref is None:
                references.append(None)
            else:
                rows = [line.split() for line in ref.splitlines() if line.strip()]
                references.append(np.asarray(rows, dtype=float).reshape(-1, 3))
    report = batch_metrics(docs, references, grid=req.grid or settings.grid,
                           samples=req.samples)
    resp = S.EvalResponse(
        total=report.total, failures=report.failures, invalidity_ratio=report.invalidity,
        statuses=[S.StatusModel(ok=s.ok, failed_part=s.failed_part, error_code=s.error_code,
                                message=s.message) for s in report.statuses],
        cds=report.cds)
    if report.cds:
        resp.avg_cd = report.avg_cd
        resp.med_cd = report.med_cd
        resp.avg_cd_x1000 = report.avg_cd_scaled
        resp.med_cd_x1000 = report.med_cd_scaled
    return resp


# --- app factory ------------------------------------------------------------------

def create_app(settings: Optional[ServiceSettings] = None) -> FastAPI:
    settings = settings or ServiceSettings()
    app = FastAPI(title="histcad", version="0.1.0")

    @app.exception_handler(HistcadError)
    async def _histcad_error(request: Request, exc: HistcadError):
        status = 400 if isinstance(exc, FormatError) else 422
        body = S.ErrorBody(code=exc.code, message=str(exc),
                           context={k: v for k, v in exc.context.items()
                                    if isinstance(v, (str, int, float, bool))})
        return JSONResponse(status_code=status, content=body.model_dump())

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/validate", response_model=S.ValidateResponse)
    def validate(req: S.ValidateRequest):
        return handle_validate(req)

    @app.post("/v1/normalize", response_model=S.NormalizeResponse)
    def normalize(req: S.NormalizeRequest):
        return handle_normalize(req)

    @app.post("/v1/flatten", response_model=S.FlattenResponse)
    def flatten(req: S.FlattenRequest):
        return handle_flatten(req)

    @app.post("/v1/analyze", response_model=S.AnalyzeResponse)
    def analyze(req: S.AnalyzeRequest):
        return handle_analyze(req)

    @app.post("/v1/execute", response_model=S.ExecuteResponse)
    def execute(req: S.ExecuteRequest):
        return handle_execute(req, settings)

    @app.post("/v1/edit", response_model=S.EditResponse)
    def edit(req: S.EditRequest):
        return handle_edit(req, settings)

    @app.post("/v1/nlt", response_model=S.NltResponse)
    def nlt_route(req: S.NltRequest):
        return handle_nlt(req)

    @app.post("/v1/prompt", response_model=S.PromptResponse)
    def prompt_route(req: S.PromptRequest):
        return handle_prompt(req)

    @app.post("/v1/annotate", response_model=S.AnnotateResponse)
    def annotate_route(req: S.AnnotateRequest):
        return handle_annotate(req, settings)

    @app.post("/v1/eval", response_model=S.EvalResponse)
    def eval_route(req: S.EvalRequest):
        return handle_eval(req, settings)

    return app


app = create_app()
