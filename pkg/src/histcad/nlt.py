"""Natural-language transcription, annotation prompts, and the chat transport.

Transcription is deterministic: the document is canonicalized first, all
numbers use the canonical 9-significant-digit rendering, and sentence
wording lives in versioned resource files. Every primitive, constraint, and
relation produces exactly one sentence.

Annotation requests speak a minimal chat-completion contract (one user
message in, first choice's text out) against any compatible HTTP endpoint;
results are appended to a JSONL log keyed by request hash.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources as importlib_resources
from typing import Optional, Protocol

import httpx

from .analysis import DocumentAnalysis, analyze_document
from .errors import EmptyResponseError, TransportError
from .formats import canonicalize, format_number
from .model import (Anchor, Arc, Circle, Constraint, Document, Line,
                    LinearExtrusion, UNARY_KINDS)


class AnnotationTask(str, Enum):
    MODELING_PROCESS = "process"
    GEOMETRIC_STRUCTURE = "structure"
    FUNCTIONAL_TYPE = "function"


_PROMPT_FILES = {
    AnnotationTask.MODELING_PROCESS: "prompt_modeling_process.txt",
    AnnotationTask.GEOMETRIC_STRUCTURE: "prompt_geometric_structure.txt",
    AnnotationTask.FUNCTIONAL_TYPE: "prompt_functional_type.txt",
}

_MULTI_PART_SUBJECT = "multi-component assembly"
_SINGLE_PART_SUBJECT = "single-part model"


def _load_resource(name: str) -> str:
    return importlib_resources.files("histcad.resources").joinpath(name).read_text("utf-8")


def _templates() -> dict:
    return json.loads(_load_resource("nlt_templates.json"))


def _fmt(x: float) -> str:
    return format_number(x)


def _ref_text(ref) -> str:
    if ref.anchor == Anchor.WHOLE:
        return ref.primitive
    return f"{ref.primitive}.{ref.anchor.value}"


def build_nlt(doc: Document, analysis: Optional[DocumentAnalysis] = None) -> str:
    """Deterministic transcription of a document plus its derived analysis."""
    if analysis is None:
        analysis = analyze_document(doc)
    t = _templates()
    doc = canonicalize(doc)
    lines: list[str] = [t["document_header"].format(n_parts=len(doc.parts))]

    for pi, part in enumerate(doc.parts):
        lines.append(t["part_header"].format(index=pi + 1, total=len(doc.parts)))
        plane = part.sketch.plane
        lines.append(t["plane"].format(
            tx=_fmt(plane.translation[0]), ty=_fmt(plane.translation[1]),
            tz=_fmt(plane.translation[2]), ax=_fmt(plane.euler_angles[0]),
            ay=_fmt(plane.euler_angles[1]), az=_fmt(plane.euler_angles[2])))

        for p in part.sketch.primitives:
            if isinstance(p, Line):
                lines.append(t["line"].format(id=p.id, x0=_fmt(p.start[0]), y0=_fmt(p.start[1]),
                                              x1=_fmt(p.end[0]), y1=_fmt(p.end[1])))
            elif isinstance(p, Circle):
                lines.append(t["circle"].format(id=p.id, cx=_fmt(p.center[0]),
                                                cy=_fmt(p.center[1]), r=_fmt(p.radius)))
            elif isinstance(p, Arc):
                lines.append(t["arc"].format(id=p.id, x0=_fmt(p.start[0]), y0=_fmt(p.start[1]),
                                             xm=_fmt(p.mid[0]), ym=_fmt(p.mid[1]),
                                             x1=_fmt(p.end[0]), y1=_fmt(p.end[1])))

        pa = analysis.parts[pi]
        if pa.loop_dict:
            for name in sorted(pa.loop_dict):
                group = pa.loop_dict[name]
                lines.append(t["loop_outer"].format(
                    name=name, area=_fmt(group.outer.area),
                    prims=", ".join(group.outer.primitive_ids())))
                for hname in sorted(group.holes):
                    hole = group.holes[hname]
                    lines.append(t["loop_hole"].format(
                        name=hname, outer=name, area=_fmt(hole.area),
                        prims=", ".join(hole.primitive_ids())))
        else:
            lines.append(t["no_loops"])

        if part.sketch.constraints:
            for c in part.sketch.constraints:
                if c.kind in UNARY_KINDS:
                    lines.append(t["constraint_unary"].format(
                        kind=c.kind.value, ref0=_ref_text(c.refs[0])))
                else:
                    lines.append(t["constraint_binary"].format(
                        kind=c.kind.value, ref0=_ref_text(c.refs[0]), ref1=_ref_text(c.refs[1])))
        else:
            lines.append(t["no_constraints"])

        ext = part.extrusion
        if isinstance(ext, LinearExtrusion):
            if ext.symmetric:
                key = "extrude_linear_symmetric"
            elif ext.back_length:
                key = "extrude_linear_two_sided"
            else:
                key = "extrude_linear"
            lines.append(t[key].format(
                dx=_fmt(ext.direction[0]), dy=_fmt(ext.direction[1]), dz=_fmt(ext.direction[2]),
                length=_fmt(ext.length), back=_fmt(ext.back_length)))
        else:
            lines.append(t["extrude_rotated"].format(
                px=_fmt(ext.axis_point[0]), py=_fmt(ext.axis_point[1]), pz=_fmt(ext.axis_point[2]),
                dx=_fmt(ext.axis_dir[0]), dy=_fmt(ext.axis_dir[1]), dz=_fmt(ext.axis_dir[2]),
                a0=_fmt(ext.start_angle), a1=_fmt(ext.end_angle)))
        lines.append(t["boolean"].format(op=part.boolean.value.replace("_", " ")))
        lines.append(t["obb"].format(
            cx=_fmt(pa.obb.center[0]), cy=_fmt(pa.obb.center[1]), cz=_fmt(pa.obb.center[2]),
            hx=_fmt(pa.obb.half_extents[0]), hy=_fmt(pa.obb.half_extents[1]),
            hz=_fmt(pa.obb.half_extents[2])))

    if analysis.relations:
        lines.append(t["relations_header"])
        verbs = t["relation_verbs"]
        for (i, j) in sorted(analysis.relations):
            entry = analysis.relations[(i, j)]
            toward = ""
            if entry.rel_pos:
                toward = t["relation_toward"].format(labels=", ".join(sorted(entry.rel_pos)))
            lines.append(t["relation"].format(
                i=i + 1, verb=verbs[entry.rel_type.value], j=j + 1, toward=toward))
    return "\n".join(lines) + "\n"


def prompt_template(task: AnnotationTask) -> str:
    return _load_resource(_PROMPT_FILES[task]).rstrip("\n")


def build_prompt(nlt_text: str, task: AnnotationTask, multi_part: bool = True) -> str:
    """Task prompt with the transcription substituted for its placeholder."""
    subject = _MULTI_PART_SUBJECT if multi_part else _SINGLE_PART_SUBJECT
    return prompt_template(task).replace("{SUBJECT}", subject).replace("{NLT}", nlt_text)


# --- transport -----------------------------------------------------------------

class Transport(Protocol):
    model: str

    def complete(self, prompt: str) -> str: ...


@dataclass
class ChatEndpoint:
    """Minimal chat-completion client: POST {model, messages}, read the first
    choice. Retries transient failures with exponential backoff."""

    endpoint: str
    model: str
    api_key: str = ""
    timeout: float = 60.0
    max_attempts: int = 3
    backoff: float = 0.5

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        last_error = ""
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = httpx.post(self.endpoint, json=body, headers=headers,
                                  timeout=self.timeout)
            except httpx.HTTPError as e:
                last_error = str(e)
                continue
            if resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise TransportError(f"chat endpoint returned HTTP {resp.status_code}")
            return _extract_text(resp.json())
        raise TransportError(
            f"chat endpoint failed after {self.max_attempts} attempts: {last_error}")


def _extract_text(payload: dict) -> str:
    try:
        choice = payload["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise EmptyResponseError("response carries no choices") from None
    text = ""
    if isinstance(choice, dict):
        message = choice.get("message")
        if isinstance(message, dict):
            text = message.get("content") or ""
        if not text:
            text = choice.get("text") or ""
    if not text:
        raise EmptyResponseError("response text is empty")
    return text


# --- annotation records -----------------------------------------------------------

@dataclass(frozen=True)
class AnnotationRecord:
    task: str
    model: str
    request_hash: str
    timestamp: float
    annotation: str

    def to_dict(self) -> dict:
        return {"task": self.task, "model": self.model, "request_hash": self.request_hash,
                "timestamp": self.timestamp, "annotation": self.annotation}


def request_hash(model: str, prompt: str) -> str:
    return hashlib.sha256((model + "\x00" + prompt).encode("utf-8")).hexdigest()


def annotate(doc: Document, task: AnnotationTask, transport: Transport,
             analysis: Optional[DocumentAnalysis] = None,
             log_path: Optional[str] = None) -> AnnotationRecord:
    """One completion for one (document, task); appended to the JSONL log."""
    nlt_text = build_nlt(doc, analysis)
    prompt = build_prompt(nlt_text, task, multi_part=len(doc.parts) > 1)
    text = transport.complete(prompt)
    if not text.strip():
        raise EmptyResponseError("annotation text is empty")
    record = AnnotationRecord(task=task.value, model=transport.model,
                              request_hash=request_hash(transport.model, prompt),
                              timestamp=time.time(), annotation=text)
    if log_path:
        with open(log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_dict()) + "\n")
    return record
