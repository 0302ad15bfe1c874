"""Request/response models of the HTTP service (and the in-process client).

Documents travel as canonical `.hcad` text, hierarchical inputs as `.hier`
text, and point clouds as XYZ text, so the service is a stateless text-in /
text-out surface over the core pipeline.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class ViolationModel(BaseModel):
    code: str
    path: str
    message: str


class ValidateRequest(BaseModel):
    document: str
    strict: bool = False


class ValidateResponse(BaseModel):
    valid: bool
    violations: list[ViolationModel] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)


class NormalizeRequest(BaseModel):
    document: str
    target_extent: float = 1.0
    strict: bool = False


class NormalizeResponse(BaseModel):
    document: str


class FlattenRequest(BaseModel):
    hier: str
    strict: bool = False


class FlattenResponse(BaseModel):
    document: str
    prune_log: list[str] = Field(default_factory=list)
    warnings: list[str] = Field(default_factory=list)


class AnalyzeRequest(BaseModel):
    document: str
    strict: bool = False


class AnalyzeResponse(BaseModel):
    analysis: dict


class ExecuteRequest(BaseModel):
    document: str
    strict: bool = False
    grid: Optional[int] = None
    samples: int = 2000
    include_mesh: bool = True
    include_points: bool = False


class ExecuteResponse(BaseModel):
    ok: bool
    failed_part: Optional[int] = None
    error_code: str = ""
    message: str = ""
    volume: Optional[float] = None
    watertight: Optional[bool] = None
    n_triangles: int = 0
    stl_base64: str = ""
    points_xyz: str = ""


class EditRequest(BaseModel):
    document: str
    pins: dict[str, float]
    part: int = 0
    strict: bool = False
    tol: Optional[float] = None


class EditResponse(BaseModel):
    document: str
    converged: bool
    iterations: int
    max_residual: float
    tol: float
    all_satisfied: bool
    notes: list[str] = Field(default_factory=list)


class NltRequest(BaseModel):
    document: str
    strict: bool = False


class NltResponse(BaseModel):
    nlt: str


class PromptRequest(BaseModel):
    document: str
    task: str
    strict: bool = False


class PromptResponse(BaseModel):
    prompt: str


class AnnotateRequest(BaseModel):
    document: str
    task: str
    strict: bool = False
    endpoint: Optional[str] = None
    model: Optional[str] = None


class AnnotateResponse(BaseModel):
    annotation: str
    task: str
    model: str
    request_hash: str
    timestamp: float


class StatusModel(BaseModel):
    ok: bool
    failed_part: Optional[int] = None
    error_code: str = ""
    message: str = ""


class EvalRequest(BaseModel):
    documents: list[str]
    references: Optional[list[Optional[str]]] = None  # XYZ text per document
    strict: bool = False
    grid: Optional[int] = None
    samples: int = 2000


class EvalResponse(BaseModel):
    total: int
    failures: int
    invalidity_ratio: float
    statuses: list[StatusModel] = Field(default_factory=list)
    cds: list[float] = Field(default_factory=list)
    avg_cd: Optional[float] = None
    med_cd: Optional[float] = None
    avg_cd_x1000: Optional[float] = None
    med_cd_x1000: Optional[float] = None


class ErrorBody(BaseModel):
    code: str
    message: str
    context: dict = Field(default_factory=dict)
