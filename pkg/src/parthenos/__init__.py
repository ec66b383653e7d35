"""Round-trip editing of ``.pss`` class repositories through a fact graph.

Typical use::

    from parthenos import extract_model, TransformationRequest, apply_transformation

    kb = extract_model("repo")
    outcome = apply_transformation(kb, "repo", TransformationRequest("create_class", {"name": "Shelf"}))
"""
from .dialect import SourceSyntaxError, SourceUnit, list_classes, parse_unit, print_unit
from .evaluation import compute_metrics, load_scenario, run_scenario, score
from .extraction import ExtractionError, extract_model, process_metadata
from .graph import (
    Delta,
    Edge,
    KnowledgeBase,
    PatternGraph,
    Production,
    Property,
    Vertex,
    apply_spo,
    find_matches,
    kb_diff,
    parse_kb,
    serialize_kb,
)
from .injection import InjectionModel, plan_injection, typecheck_delta, write_sources
from .transformation import TransformationOutcome, TransformationRequest, apply_transformation, dispatch
from .ui import generate_site

__version__ = "0.1.0"

__all__ = [
    "Delta",
    "Edge",
    "ExtractionError",
    "InjectionModel",
    "KnowledgeBase",
    "PatternGraph",
    "Production",
    "Property",
    "SourceSyntaxError",
    "SourceUnit",
    "TransformationOutcome",
    "TransformationRequest",
    "Vertex",
    "apply_spo",
    "apply_transformation",
    "compute_metrics",
    "dispatch",
    "extract_model",
    "find_matches",
    "generate_site",
    "kb_diff",
    "list_classes",
    "load_scenario",
    "parse_kb",
    "parse_unit",
    "plan_injection",
    "print_unit",
    "process_metadata",
    "run_scenario",
    "score",
    "serialize_kb",
    "typecheck_delta",
    "write_sources",
]
