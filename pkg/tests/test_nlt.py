"""Transcription determinism and coverage, prompt fidelity, transport behavior."""

import json
import math

import numpy as np
import pytest

from conftest import square_doc, square_lines, square_sketch
from histcad.analysis import analyze_document
from histcad.errors import EmptyResponseError, TransportError
from histcad.model import (BooleanOp, Circle, Constraint, ConstraintKind,
                           ConstraintRef, Document, LinearExtrusion, Part,
                           Sketch, SketchPlane)
from histcad.nlt import (AnnotationTask, ChatEndpoint, annotate, build_nlt,
                         build_prompt, prompt_template, request_hash)


def two_part_doc():
    base = Part(square_sketch(side=2.0), LinearExtrusion((0, 0, 1), 1.0))
    cut = Part(Sketch(SketchPlane((0, 0, 0)), (Circle("c0", (1.0, 1.0), 0.4),)),
               LinearExtrusion((0, 0, 1), 1.0), BooleanOp.SUBTRACT)
    return Document((base, cut))


def test_nlt_contains_primitive_loop_extrusion_sentences():
    text = build_nlt(square_doc())
    assert text.count("Line l") == 4
    assert "outer contour" in text
    assert "extruded along direction" in text


def test_nlt_two_part_subtract_and_relation():
    text = build_nlt(two_part_doc())
    assert "subtract" in text
    assert "Part 1" in text and "Part 2" in text
    assert "part 2" in text  # at least one relation sentence


def test_nlt_deterministic_under_permutation():
    doc = square_doc()
    sk = doc.parts[0].sketch
    permuted = Sketch(sk.plane, tuple(reversed(sk.primitives)), sk.constraints)
    doc2 = Document((Part(permuted, doc.parts[0].extrusion, doc.parts[0].boolean),),
                    doc.metadata)
    assert build_nlt(doc) == build_nlt(doc2)


def test_nlt_coverage_counts(rng):
    cons = (
        Constraint(ConstraintKind.HORIZONTAL, (ConstraintRef("l0"),)),
        Constraint(ConstraintKind.PERPENDICULAR, (ConstraintRef("l0"), ConstraintRef("l1"))),
    )
    doc = Document((Part(square_sketch(constraints=cons), LinearExtrusion((0, 0, 1), 1.0)),))
    analysis = analyze_document(doc)
    text = build_nlt(doc, analysis)
    n_prims = len(doc.parts[0].sketch.primitives)
    assert text.count("Line l") == n_prims
    assert text.count("constraint") - text.count("no constraints") == len(cons)
    # relation sentences = ordered pairs
    doc2 = two_part_doc()
    analysis2 = analyze_document(doc2)
    text2 = build_nlt(doc2, analysis2)
    relation_lines = [ln for ln in text2.splitlines() if ln.startswith("Part ") and " part " in ln]
    assert len(relation_lines) == len(analysis2.relations) == 2


# --- prompts ------------------------------------------------------------------------

def test_functional_prompt_fragment():
    text = build_prompt(build_nlt(square_doc()), AnnotationTask.FUNCTIONAL_TYPE,
                        multi_part=False)
    assert "concise, specific noun phrase such as 'hex head bolt'" in text


def test_structure_prompt_fragment():
    text = build_prompt(build_nlt(square_doc()), AnnotationTask.GEOMETRIC_STRUCTURE,
                        multi_part=False)
    assert "Do not infer function, dimensions, or modeling steps." in text


def test_process_prompt_fragment():
    text = build_prompt(build_nlt(square_doc()), AnnotationTask.MODELING_PROCESS,
                        multi_part=False)
    assert "Output a continuous natural-language paragraph without lists or special characters." in text


@pytest.mark.parametrize("task", list(AnnotationTask))
def test_prompt_contains_template_verbatim(task):
    nlt_text = build_nlt(two_part_doc())
    prompt = build_prompt(nlt_text, task, multi_part=True)
    template = prompt_template(task).replace("{SUBJECT}", "multi-component assembly")
    prefix, suffix = template.split("{NLT}")
    assert prefix in prompt
    assert suffix in prompt
    assert nlt_text in prompt


def test_single_part_subject_wording():
    prompt = build_prompt("X", AnnotationTask.MODELING_PROCESS, multi_part=False)
    assert "single-part model" in prompt
    assert "multi-component assembly" not in prompt


# --- transport / annotate ------------------------------------------------------------

class MockTransport:
    def __init__(self, text="a fixed annotation", model="mock-model"):
        self.text = text
        self.model = model
        self.prompts = []

    def complete(self, prompt: str) -> str:
        self.prompts.append(prompt)
        return self.text


def test_annotate_with_mock_transport(tmp_path):
    transport = MockTransport()
    log = str(tmp_path / "ann.jsonl")
    record = annotate(square_doc(), AnnotationTask.FUNCTIONAL_TYPE, transport,
                      log_path=log)
    assert record.annotation == "a fixed annotation"
    assert record.model == "mock-model"
    assert record.request_hash == request_hash("mock-model", transport.prompts[0])
    lines = open(log).read().splitlines()
    assert len(lines) == 1
    assert json.loads(lines[0])["task"] == "function"


def test_annotate_batch_distinct_hashes():
    transport = MockTransport()
    docs = [square_doc(side=s) for s in (1.0, 2.0, 3.0)]
    hashes = {annotate(d, AnnotationTask.MODELING_PROCESS, transport).request_hash
              for d in docs}
    assert len(hashes) == 3


def test_transport_retries_then_fails(monkeypatch):
    import httpx

    calls = {"n": 0}

    def fake_post(url, **kwargs):
        calls["n"] += 1
        return httpx.Response(500, request=httpx.Request("POST", url))

    monkeypatch.setattr(httpx, "post", fake_post)
    endpoint = ChatEndpoint("http://chat.invalid/v1", "m", backoff=0.0)
    with pytest.raises(TransportError):
        endpoint.complete("hello")
    assert calls["n"] == 3


def test_transport_extracts_first_choice(monkeypatch):
    import httpx

    def fake_post(url, **kwargs):
        body = kwargs["json"]
        assert body["messages"][0]["role"] == "user"
        return httpx.Response(
            200, request=httpx.Request("POST", url),
            json={"choices": [{"message": {"content": "pong"}}]})

    monkeypatch.setattr(httpx, "post", fake_post)
    endpoint = ChatEndpoint("http://chat.invalid/v1", "m")
    assert endpoint.complete("ping") == "pong"


def test_transport_empty_response(monkeypatch):
    import httpx

    def fake_post(url, **kwargs):
        return httpx.Response(200, request=httpx.Request("POST", url),
                              json={"choices": [{"message": {"content": ""}}]})

    monkeypatch.setattr(httpx, "post", fake_post)
    endpoint = ChatEndpoint("http://chat.invalid/v1", "m")
    with pytest.raises(EmptyResponseError):
        endpoint.complete("ping")
