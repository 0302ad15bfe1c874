"""Whole-document geometric analysis: loops, OBBs, and inter-part relations.

This is the feature-extraction stage feeding transcription and the CLI
``analyze`` dump. Output dictionaries use canonical numeric rounding so the
structured-text form is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .formats import canonical_number
from .model import Document
from .obb import OBB, compute_obb
from .relations import RelationTable, build_relation_table
from .topology import LoopDict, LoopsResult, build_loop_dict, compute_loops


@dataclass
class PartAnalysis:
    loops: LoopsResult
    loop_dict: LoopDict
    obb: OBB


@dataclass
class DocumentAnalysis:
    parts: list[PartAnalysis]
    relations: RelationTable


def analyze_document(doc: Document) -> DocumentAnalysis:
    parts = []
    for part in doc.parts:
        loops = compute_loops(part.sketch)
        loop_dict = build_loop_dict(loops.loops)
        obb = compute_obb(part)
        parts.append(PartAnalysis(loops, loop_dict, obb))
    relations = build_relation_table([p.obb for p in parts]) if len(parts) > 1 else {}
    return DocumentAnalysis(parts, relations)


def _round_seq(vals) -> list[float]:
    return [canonical_number(v) for v in vals]


def analysis_to_dict(analysis: DocumentAnalysis) -> dict:
    """JSON-ready structured dump of loops, OBBs, and relations."""
    parts = []
    for pa in analysis.parts:
        loop_dict = {}
        for name, group in pa.loop_dict.items():
            loop_dict[name] = {
                "area": canonical_number(group.outer.area),
                "perimeter": canonical_number(group.outer.perimeter),
                "primitives": list(group.outer.primitive_ids()),
                "holes": {
                    hname: {
                        "area": canonical_number(hole.area),
                        "perimeter": canonical_number(hole.perimeter),
                        "primitives": list(hole.primitive_ids()),
                    }
                    for hname, hole in group.holes.items()
                },
            }
        parts.append({
            "loop_dict": loop_dict,
            "dangling": list(pa.loops.dangling),
            "obb": {
                "center": _round_seq(pa.obb.center),
                "axes": [_round_seq(ax) for ax in pa.obb.axes],
                "half_extents": _round_seq(pa.obb.half_extents),
            },
        })
    relations = [
        {
            "i": i,
            "j": j,
            "type": entry.rel_type.value,
            "labels": sorted(entry.rel_pos),
        }
        for (i, j), entry in sorted(analysis.relations.items())
    ]
    return {"parts": parts, "relations": relations}
