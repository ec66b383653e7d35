"""Build the knowledge base from a repository of ``.pss`` files.

Stages: parse every file, run the class and UI fact analyzers per unit, merge,
then add metadata (built-in type vertices, ``generated`` flags on accessors).
"""
from __future__ import annotations

import logging
import os
from pathlib import Path
from typing import Collection, Iterable, Mapping

from . import schema as S
from .dialect import (
    BUILTIN_TYPES,
    FieldDecl,
    MethodDecl,
    Param,
    SourceSyntaxError,
    SourceUnit,
    iter_source_files,
    parse_unit,
)
from .graph import Edge, Fact, KnowledgeBase, Property, Vertex

log = logging.getLogger(__name__)

__all__ = [
    "ExtractionError",
    "UiAnnotationError",
    "analyze_class_facts",
    "analyze_ui_facts",
    "extract_model",
    "extract_sources",
    "extract_units",
    "is_canonical_accessor",
    "process_metadata",
    "read_sources",
]


class ExtractionError(Exception):
    def __init__(self, message: str, failures: Iterable[tuple[str, str]] = ()):
        self.failures = list(failures)
        if self.failures:
            message += "".join(f"\n  {path}: {why}" for path, why in self.failures)
        super().__init__(message)


class UiAnnotationError(ExtractionError):
    pass


def analyze_class_facts(unit: SourceUnit) -> set[Fact]:
    decl = unit.class_decl
    cls = decl.name
    cid = S.class_id(cls)
    facts: set[Fact] = {
        Vertex(cid, "class"),
        Property(cid, "name", cls),
        Property(cid, "source_file", unit.file_path),
    }
    if decl.superclass:
        facts.add(Edge(S.edge_id("extends", cls), cid, S.class_id(decl.superclass), "extends"))
    for member in decl.members:
        qualified = f"{cls}.{member.name}"
        if isinstance(member, FieldDecl):
            aid = S.attr_id(cls, member.name)
            facts |= {
                Vertex(aid, "attribute"),
                Property(aid, "name", member.name),
                Edge(S.edge_id("has_attribute", qualified), cid, aid, "has_attribute"),
                Edge(S.edge_id("has_type", qualified), aid, S.type_target(member.type_ref), "has_type"),
            }
        else:
            mid = S.method_id(cls, member.name)
            facts |= {
                Vertex(mid, "method"),
                Property(mid, "name", member.name),
                Edge(S.edge_id("has_method", qualified), cid, mid, "has_method"),
                Edge(S.edge_id("returns", qualified), mid, S.type_target(member.return_type), "returns"),
            }
    return facts


def _ui_args(annotation, where: str, default_label: str) -> dict:
    values = {"label": default_label, "position": None, "visible": True}
    for key, value in annotation.args:
        if key not in S.UI_KEYS:
            raise UiAnnotationError(f"{where}: unknown @{annotation.name} argument {key!r}")
        ok = {
            "label": isinstance(value, str),
            "position": isinstance(value, int) and not isinstance(value, bool) and value >= 1,
            "visible": isinstance(value, bool),
        }[key]
        if not ok:
            raise UiAnnotationError(f"{where}: bad value {value!r} for @{annotation.name} {key}")
        values[key] = value
    return values


def _next_free(taken: Collection[int]) -> int:
    n = 1
    while n in taken:
        n += 1
    return n


def analyze_ui_facts(unit: SourceUnit, taken_panel_positions: Collection[int] = ()) -> set[Fact]:
    """Panel and field facts for one unit.

    A panel without an explicit position takes the smallest index not in
    ``taken_panel_positions``. Field positions are resolved within the panel.
    """
    decl = unit.class_decl
    cls = decl.name
    where = unit.file_path
    panel = decl.annotation(S.PANEL_ANNOTATION)
    for member in decl.members:
        marked = any(a.name == S.FIELD_ANNOTATION for a in member.annotations)
        if marked and isinstance(member, MethodDecl):
            raise UiAnnotationError(f"{where}: @{S.FIELD_ANNOTATION} on method {member.name!r}")
        if marked and panel is None:
            raise UiAnnotationError(f"{where}: @{S.FIELD_ANNOTATION} in class {cls!r} without @Panel")
    if decl.annotation(S.FIELD_ANNOTATION) is not None:
        raise UiAnnotationError(f"{where}: @{S.FIELD_ANNOTATION} on class {cls!r}")
    if panel is None:
        return set()

    pid = S.panel_id(cls)
    args = _ui_args(panel, where, cls)
    if args["position"] is None:
        args["position"] = _next_free(taken_panel_positions)
    facts: set[Fact] = {
        Vertex(pid, "panel"),
        Edge(S.edge_id("represents", cls), pid, S.class_id(cls), "represents"),
    }
    facts |= {Property(pid, k, args[k]) for k in S.UI_KEYS}

    fields = []
    for member in decl.fields:
        ann = next((a for a in member.annotations if a.name == S.FIELD_ANNOTATION), None)
        if ann is not None:
            fields.append((member, _ui_args(ann, f"{where}:{member.name}", member.name)))
    explicit = [a["position"] for _, a in fields if a["position"] is not None]
    if len(set(explicit)) != len(explicit):
        raise UiAnnotationError(f"{where}: colliding @{S.FIELD_ANNOTATION} positions {sorted(explicit)}")
    taken = set(explicit)
    for member, a in fields:
        if a["position"] is None:
            a["position"] = _next_free(taken)
            taken.add(a["position"])
        qualified = f"{cls}.{member.name}"
        fid = S.field_id(cls, member.name)
        facts |= {
            Vertex(fid, "field"),
            Edge(S.edge_id("reflects", qualified), fid, S.attr_id(cls, member.name), "reflects"),
            Edge(S.edge_id("has_field", qualified), pid, fid, "has_field"),
        }
        facts |= {Property(fid, k, a[k]) for k in S.UI_KEYS}
    return facts


def is_canonical_accessor(method: MethodDecl, fields: Mapping[str, FieldDecl]) -> bool:
    """True when ``method`` is exactly the generated getter or setter of a field."""
    for attr, f in fields.items():
        getter, setter = S.accessor_names(attr)
        if method.name == getter:
            return (
                method.params == ()
                and method.return_type == f.type_ref
                and method.body_text == S.getter_body(attr)
            )
        if method.name == setter:
            return (
                method.params == (Param(S.SETTER_PARAM, f.type_ref),)
                and method.return_type == "void"
                and method.body_text == S.setter_body(attr)
            )
    return False


def process_metadata(kb: KnowledgeBase, units: Iterable[SourceUnit] = ()) -> KnowledgeBase:
    """Add built-in type vertices and ``generated`` flags. Idempotent."""
    extra: set[Fact] = {Vertex(S.type_id(t), "type") for t in BUILTIN_TYPES}
    for unit in units:
        decl = unit.class_decl
        fields = {f.name: f for f in decl.fields}
        for m in decl.methods:
            mid = S.method_id(decl.name, m.name)
            if mid in kb.vertices and is_canonical_accessor(m, fields):
                extra.add(Property(mid, "generated", True))
    return kb.with_facts(extra)


def _resolve_references(facts: set[Fact]) -> set[Fact]:
    # a type or superclass naming no class in the repo becomes an opaque type vertex
    vertex_ids = {f.id for f in facts if isinstance(f, Vertex)}
    out: set[Fact] = set()
    for f in facts:
        if isinstance(f, Edge) and f.dst not in vertex_ids:
            target = S.type_id(S.type_name_of(f.dst))
            log.debug("unresolved reference %s -> %s", f.id, target)
            out.add(Vertex(target, "type"))
            f = Edge(f.id, f.src, target, f.label)
        out.add(f)
    return out


def extract_units(units: Iterable[SourceUnit]) -> KnowledgeBase:
    units = sorted(units, key=lambda u: u.name)
    names = [u.name for u in units]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ExtractionError(
            "class declared more than once",
            [(u.file_path, f"duplicate class {u.name}") for u in units if u.name in dupes],
        )

    explicit: dict[int, str] = {}
    for u in units:
        panel = u.class_decl.annotation(S.PANEL_ANNOTATION)
        pos = panel.get("position") if panel else None
        if isinstance(pos, int) and not isinstance(pos, bool):
            if pos in explicit:
                raise UiAnnotationError(
                    f"panels {explicit[pos]!r} and {u.name!r} share position {pos}"
                )
            explicit[pos] = u.name
    taken = set(explicit)

    facts: set[Fact] = set()
    for u in units:
        facts |= analyze_class_facts(u)
        ui = analyze_ui_facts(u, taken)
        for f in ui:
            if isinstance(f, Property) and f.key == "position" and f.owner.startswith("panel:"):
                taken.add(f.value)  # type: ignore[arg-type]
        facts |= ui
    facts = _resolve_references(facts | {Vertex(S.type_id(t), "type") for t in BUILTIN_TYPES})
    return process_metadata(KnowledgeBase(facts), units)


def parse_sources(sources: Mapping[str, str]) -> list[SourceUnit]:
    units, failures = [], []
    for rel in sorted(sources):
        try:
            units.append(parse_unit(sources[rel], rel))
        except SourceSyntaxError as exc:
            failures.append((rel, f"{exc.line}:{exc.column}: {exc.message}"))
    if failures:
        raise ExtractionError(f"{len(failures)} file(s) failed to parse", failures)
    return units


def extract_sources(sources: Mapping[str, str]) -> KnowledgeBase:
    """Extract from an in-memory ``{relative path: text}`` repository."""
    return extract_units(parse_sources(sources))


def read_sources(repo: str | os.PathLike) -> dict[str, str]:
    root = Path(repo)
    out = {}
    failures = []
    for rel in iter_source_files(root):
        try:
            out[rel] = (root / rel).read_text(encoding="utf-8")
        except UnicodeDecodeError as exc:
            failures.append((rel, f"not UTF-8: {exc.reason}"))
    if failures:
        raise ExtractionError(f"{len(failures)} file(s) failed to parse", failures)
    return out


def extract_model(repo: str | os.PathLike) -> KnowledgeBase:
    return extract_sources(read_sources(repo))
