"""Constraint-aware parametric CAD modeling sequence toolkit.

Core pipeline: parse/serialize flat sketch-and-extrude documents, flatten
hierarchical face-loop sketches by symmetric difference, infer loops and
oriented bounding boxes, classify inter-part spatial relations, validate
and solve geometric constraints, execute sequences to meshes with quality
metrics, and emit deterministic transcriptions plus annotation prompts.
"""

from .model import (Anchor, Arc, BooleanOp, Circle, Constraint, ConstraintKind,
                    ConstraintRef, Document, DocumentMetadata, Line,
                    LinearExtrusion, Part, RotatedExtrusion, Sketch,
                    SketchPlane, normalize_document, validate_document)
from .formats import (canonicalize, import_hierarchical, parse_document,
                      serialize_document)
from .flatten import (Multiset, add_auxiliary_constraints, decompose,
                      flatten_sketch, migrate_constraints, prune_constraints,
                      symmetric_difference)
from .topology import Loop, LoopGroup, build_loop_dict, compute_loops
from .obb import OBB, compute_obb
from .relations import (RelType, build_relation_table, classify_relation,
                        directional_labels, sat_test)
from .constraints import (ResidualSystem, check_satisfied, constraint_residual,
                          jacobian, residual, solve)
from .profiles import Profile, build_profile
from .extrude import extrude_linear, extrude_rotated
from .fields import SolidField, apply_boolean
from .execute import execute_document, execute_part
from .metrics import batch_metrics, chamfer_distance
from .analysis import analyze_document
from .nlt import AnnotationTask, ChatEndpoint, annotate, build_nlt, build_prompt

__version__ = "0.1.0"
