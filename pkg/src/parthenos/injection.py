"""Turn knowledge-base deltas into source edits and write them atomically.

Pipeline for one delta: :func:`typecheck_delta` -> :func:`plan_injection`
(one :class:`InjectionModel` per edit) -> :func:`locate_injection_point` ->
:func:`inject_ast` -> :func:`write_sources`.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from . import schema as S
from .dialect import (
    SOURCE_SUFFIX,
    Annotation,
    ClassDecl,
    FieldDecl,
    MethodDecl,
    Param,
    SourceSyntaxError,
    SourceUnit,
    parse_unit,
    print_unit,
)
from .graph import Delta, Edge, KnowledgeBase, Property, Vertex

log = logging.getLogger(__name__)

__all__ = [
    "AnchorNotFound",
    "InjectionError",
    "InjectionModel",
    "InjectionPoint",
    "SourceWriteError",
    "TypeViolation",
    "UnmappableDelta",
    "apply_models",
    "inject_ast",
    "locate_injection_point",
    "plan_injection",
    "typecheck_delta",
    "write_sources",
]

INJECTIONS = ("add_class", "add_field", "add_methods", "set_annotation", "remove_annotation")
_PHASE = {name: i for i, name in enumerate(INJECTIONS)}


class InjectionError(Exception):
    pass


class AnchorNotFound(InjectionError):
    pass


class UnmappableDelta(InjectionError):
    pass


class SourceWriteError(OSError):
    def __init__(self, message: str, rollback: list[str]):
        super().__init__(message + "".join(f"\n  {line}" for line in rollback))
        self.rollback = rollback


@dataclass(frozen=True)
class TypeViolation:
    code: str
    subject: str
    message: str = ""

    def __str__(self) -> str:
        return f"{self.code}: {self.subject}"


@dataclass(frozen=True)
class InjectionModel:
    injection: str
    target_file: str | None
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.injection not in INJECTIONS:
            raise ValueError(f"unknown injection {self.injection!r}")

    def to_json(self) -> dict:
        return {"injection": self.injection, "target_file": self.target_file, "params": dict(self.params)}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> InjectionModel:
        try:
            return cls(data["injection"], data.get("target_file"), dict(data.get("params") or {}))
        except KeyError as exc:
            raise ValueError(f"injection model lacks {exc.args[0]!r}") from None

    @property
    def file(self) -> str:
        if self.injection == "add_class":
            return S.source_file_for(self.params["name"])
        assert self.target_file is not None
        return self.target_file

    def sort_key(self) -> tuple:
        return (self.file, _PHASE[self.injection], json.dumps(dict(self.params), sort_keys=True))


@dataclass(frozen=True)
class InjectionPoint:
    file: str
    anchor: str
    index: int


# ---------------------------------------------------------------------------
# type checking


def _after_facts(kb: KnowledgeBase, delta: Delta):
    facts = (kb.facts - delta.removed) | delta.added
    vertices = {f.id: f.label for f in facts if isinstance(f, Vertex)}
    edges = [f for f in facts if isinstance(f, Edge)]
    return facts, vertices, edges


def _superclass_map(edges: Iterable[Edge]) -> dict[str, str]:
    return {e.src: e.dst for e in edges if e.label == "extends"}


def _ancestry(cid: str, parents: Mapping[str, str]) -> tuple[list[str], bool]:
    chain, seen = [cid], {cid}
    while chain[-1] in parents:
        nxt = parents[chain[-1]]
        if nxt in seen:
            return chain, True
        chain.append(nxt)
        seen.add(nxt)
    return chain, False


def typecheck_delta(kb: KnowledgeBase, delta: Delta) -> list[TypeViolation]:
    """Check that applying ``delta`` to ``kb`` keeps the class model well typed."""
    problems: list[TypeViolation] = []
    _, vertices, edges = _after_facts(kb, delta)
    parents = _superclass_map(edges)
    added_edges = sorted(f for f in delta.added if isinstance(f, Edge))

    for e in added_edges:
        target = S.type_name_of(e.dst)
        if e.src not in vertices:
            problems.append(TypeViolation("TargetNotFound", S.type_name_of(e.src), f"{e.id} source missing"))
            continue
        if e.label in ("has_type", "returns"):
            label = vertices.get(e.dst)
            ok = label == "class" or (label == "type" and S.type_name_of(e.dst) in S.BUILTIN_TYPES)
            if e.label == "has_type" and e.dst == S.type_id("void"):
                ok = False
            if not ok:
                problems.append(TypeViolation("TypeNotFound", target, f"{e.id} -> {e.dst}"))
        elif e.label == "extends":
            if vertices.get(e.dst) != "class":
                problems.append(TypeViolation("SuperclassNotFound", target, f"{e.id} -> {e.dst}"))
            elif _ancestry(e.src, parents)[1]:
                problems.append(TypeViolation("InheritanceCycle", S.type_name_of(e.src)))
        elif e.dst not in vertices:
            problems.append(TypeViolation("TargetNotFound", target, f"{e.id} -> {e.dst}"))

    attrs_of: dict[str, set[str]] = {}
    for e in edges:
        if e.label == "has_attribute":
            attrs_of.setdefault(e.src, set()).add(e.dst.rsplit(".", 1)[1])
    for e in added_edges:
        if e.label != "has_attribute" or e.src not in vertices:
            continue
        name = e.dst.rsplit(".", 1)[1]
        chain, _ = _ancestry(e.src, parents)
        for ancestor in chain[1:]:
            if name in attrs_of.get(ancestor, ()):
                problems.append(
                    TypeViolation("DuplicateAttribute", f"{S.type_name_of(e.src)}.{name}", f"inherited from {ancestor}")
                )

    out_edges: dict[str, list[Edge]] = {}
    for e in edges:
        out_edges.setdefault(e.src, []).append(e)
    for f in sorted(delta.added, key=lambda x: x.render()):
        if isinstance(f, Vertex) and f.label == "field":
            reflects = [e for e in out_edges.get(f.id, ()) if e.label == "reflects"]
            owners = [e.src for e in edges if e.label == "has_field" and e.dst == f.id]
            if len(reflects) != 1 or vertices.get(reflects[0].dst) != "attribute":
                problems.append(TypeViolation("TargetNotFound", S.type_name_of(f.id), "field reflects no attribute"))
            elif len(owners) != 1 or vertices.get(owners[0]) != "panel":
                problems.append(TypeViolation("PanelMissing", S.type_name_of(f.id)))
        elif isinstance(f, Property) and f.key in S.UI_KEYS:
            expected = {"label": str, "position": int, "visible": bool}[f.key]
            value = f.value
            if type(value) is not expected or (f.key == "position" and value < 1):  # type: ignore[operator]
                problems.append(TypeViolation("BadValueType", f"{f.owner}.{f.key}", repr(value)))
    return problems


# ---------------------------------------------------------------------------
# planning


def _ui_target(element_id: str) -> tuple[str, str, str | None]:
    """(annotation, class, member) for a panel or field vertex id."""
    kind, qualified = S.split_id(element_id)
    if kind == "panel":
        return S.PANEL_ANNOTATION, qualified, None
    cls, _, attr = qualified.partition(".")
    return S.FIELD_ANNOTATION, cls, attr


def plan_injection(delta: Delta, kb: KnowledgeBase) -> list[InjectionModel]:
    """Map every fact of ``delta`` onto source edits.

    ``kb`` is the knowledge base before the change. Raises
    :class:`UnmappableDelta` if any fact is not covered by an injection rule.
    """
    added = sorted(delta.added, key=lambda f: f.render())
    removed = sorted(delta.removed, key=lambda f: f.render())
    claimed: set = set()
    models: list[InjectionModel] = []
    new_props = {(p.owner, p.key): p for p in added if isinstance(p, Property)}
    new_edges = [e for e in added if isinstance(e, Edge)]

    def source_of(cls: str) -> str:
        cid = S.class_id(cls)
        p = new_props.get((cid, "source_file"))
        if p is not None:
            return str(p.value)
        value = kb.prop(cid, "source_file")
        if value is None:
            raise UnmappableDelta(f"class {cls!r} has no source file")
        return str(value)

    def claim_edges(src: str | None = None, dst: str | None = None, labels: tuple[str, ...] = ()) -> list[Edge]:
        hits = [
            e
            for e in new_edges
            if (src is None or e.src == src) and (dst is None or e.dst == dst) and e.label in labels
        ]
        claimed.update(hits)
        return hits

    def claim_props(owner: str, keys: Iterable[str]) -> dict:
        out = {}
        for k in keys:
            p = new_props.get((owner, k))
            if p is not None:
                claimed.add(p)
                out[k] = p.value
        return out

    for f in added:
        if not isinstance(f, Vertex):
            continue
        kind, qualified = S.split_id(f.id)
        if f.label == "class":
            claimed.add(f)
            props = claim_props(f.id, ("name", "source_file"))
            if props.get("source_file") != S.source_file_for(qualified):
                raise UnmappableDelta(f"new class {qualified!r} must live in {S.source_file_for(qualified)}")
            ext = claim_edges(src=f.id, labels=("extends",))
            superclass = S.type_name_of(ext[0].dst) if ext else None
            models.append(InjectionModel("add_class", None, {"name": qualified, "superclass": superclass}))
        elif f.label == "attribute":
            claimed.add(f)
            cls, _, attr = qualified.partition(".")
            claim_props(f.id, ("name",))
            claim_edges(dst=f.id, labels=("has_attribute",))
            typed = claim_edges(src=f.id, labels=("has_type",))
            if len(typed) != 1:
                raise UnmappableDelta(f"attribute {qualified!r} has no type")
            type_name = S.type_name_of(typed[0].dst)
            models.append(InjectionModel("add_field", source_of(cls), {"name": attr, "type": type_name}))
            getter, setter = S.accessor_names(attr)
            accessors = [S.method_id(cls, getter), S.method_id(cls, setter)]
            if all(any(isinstance(v, Vertex) and v.id == m for v in added) for m in accessors):
                for mid in accessors:
                    claimed.add(Vertex(mid, "method"))
                    if claim_props(mid, ("name", "generated")).get("generated") is not True:
                        raise UnmappableDelta(f"method {mid!r} is not a generated accessor")
                    claim_edges(dst=mid, labels=("has_method",))
                    claim_edges(src=mid, labels=("returns",))
                models.append(InjectionModel("add_methods", source_of(cls), {"attribute": attr, "type": type_name}))
        elif f.label in ("panel", "field"):
            claimed.add(f)
            annotation, cls, member = _ui_target(f.id)
            args = claim_props(f.id, S.UI_KEYS)
            claim_edges(src=f.id, labels=("represents", "reflects"))
            claim_edges(dst=f.id, labels=("has_field",))
            models.append(
                InjectionModel(
                    "set_annotation",
                    source_of(cls),
                    {"annotation": annotation, "member": member, "args": {k: args[k] for k in S.UI_KEYS if k in args}},
                )
            )

    # property edits on surviving UI elements
    for p in added:
        if isinstance(p, Property) and p not in claimed and p.key in S.UI_KEYS and p.owner in kb.vertices:
            if kb.vertices[p.owner].label not in ("panel", "field"):
                continue
            claimed.add(p)
            annotation, cls, member = _ui_target(p.owner)
            models.append(
                InjectionModel(
                    "set_annotation",
                    source_of(cls),
                    {"annotation": annotation, "member": member, "key": p.key, "value": p.value},
                )
            )

    removed_ids = {f.id for f in removed if isinstance(f, (Vertex, Edge))}
    gone: set = set()
    for f in removed:
        if isinstance(f, Vertex) and f.label in ("panel", "field"):
            gone.add(f)
            annotation, cls, member = _ui_target(f.id)
            models.append(InjectionModel("remove_annotation", source_of(cls), {"annotation": annotation, "member": member}))
    for f in removed:
        if f in gone:
            continue
        if isinstance(f, Edge) and (f.src in removed_ids or f.dst in removed_ids):
            continue
        if isinstance(f, Property):
            if f.owner in removed_ids or (f.owner, f.key) in new_props:
                continue
        raise UnmappableDelta(f"no injection rule removes {f.render()}")

    leftovers = [f for f in added if f not in claimed]
    if leftovers:
        raise UnmappableDelta("no injection rule adds " + ", ".join(f.render() for f in leftovers))
    models.sort(key=InjectionModel.sort_key)
    return models


# ---------------------------------------------------------------------------
# anchoring and editing


def _member_index(decl: ClassDecl, name: str) -> int:
    for i, m in enumerate(decl.members):
        if m.name == name:
            return i
    return -1


def locate_injection_point(unit: SourceUnit | None, model: InjectionModel) -> InjectionPoint:
    if model.injection == "add_class":
        if unit is not None:
            raise InjectionError(f"{model.file} already exists")
        return InjectionPoint(model.file, "new-file", 0)
    if unit is None:
        raise AnchorNotFound(f"{model.file}: file does not exist")
    decl = unit.class_decl
    p = model.params
    if model.injection == "add_field":
        if decl.member(p["name"]) is not None:
            raise InjectionError(f"{unit.file_path}: member {p['name']!r} already declared")
        last = max((i for i, m in enumerate(decl.members) if isinstance(m, FieldDecl)), default=-1)
        return InjectionPoint(unit.file_path, "after-last-field", last + 1)
    if model.injection == "add_methods":
        for name in S.accessor_names(p["attribute"]):
            if decl.member(name) is not None:
                raise InjectionError(f"{unit.file_path}: member {name!r} already declared")
        return InjectionPoint(unit.file_path, "end-of-class-body", len(decl.members))

    member = p.get("member")
    if member is None:
        annotations, index, slot = decl.annotations, -1, decl.name
    else:
        index = _member_index(decl, member)
        if index < 0 or not isinstance(decl.members[index], FieldDecl):
            raise AnchorNotFound(f"{unit.file_path}: no field {member!r}")
        annotations, slot = decl.members[index].annotations, member
    present = any(a.name == p["annotation"] for a in annotations)
    creating = model.injection == "set_annotation" and "args" in p
    if creating and present:
        raise InjectionError(f"{unit.file_path}: @{p['annotation']} already on {slot}")
    if not creating and not present:
        raise AnchorNotFound(f"{unit.file_path}: no @{p['annotation']} on {slot}")
    return InjectionPoint(unit.file_path, f"annotation-slot-of({slot})", index)


def _edit_annotations(annotations: tuple[Annotation, ...], model: InjectionModel) -> tuple[Annotation, ...]:
    p = model.params
    name = p["annotation"]
    if model.injection == "remove_annotation":
        return tuple(a for a in annotations if a.name != name)
    if "args" in p:
        return annotations + (Annotation(name, tuple(p["args"].items())),)
    return tuple(a.with_arg(p["key"], p["value"]) if a.name == name else a for a in annotations)


def accessor_methods(attr: str, type_name: str) -> tuple[MethodDecl, MethodDecl]:
    getter, setter = S.accessor_names(attr)
    return (
        MethodDecl(getter, type_name, (), S.getter_body(attr)),
        MethodDecl(setter, "void", (Param(S.SETTER_PARAM, type_name),), S.setter_body(attr)),
    )


def inject_ast(unit: SourceUnit | None, model: InjectionModel) -> SourceUnit:
    point = locate_injection_point(unit, model)
    p = model.params
    if model.injection == "add_class":
        return SourceUnit(point.file, ClassDecl(p["name"], p.get("superclass")))
    assert unit is not None
    decl = unit.class_decl
    members = list(decl.members)
    if model.injection == "add_field":
        members.insert(point.index, FieldDecl(p["name"], p["type"]))
        return unit.replace_class(members=tuple(members))
    if model.injection == "add_methods":
        members.extend(accessor_methods(p["attribute"], p["type"]))
        return unit.replace_class(members=tuple(members))
    if point.index < 0:
        return unit.replace_class(annotations=_edit_annotations(decl.annotations, model))
    target = members[point.index]
    members[point.index] = dataclasses.replace(target, annotations=_edit_annotations(target.annotations, model))
    return unit.replace_class(members=tuple(members))


def apply_models(sources: Mapping[str, str], models: Iterable[InjectionModel]) -> dict[str, str]:
    """Apply models to an in-memory repository; returns only the files that changed."""
    units: dict[str, SourceUnit | None] = {}
    for model in models:
        rel = model.file
        if rel not in units:
            units[rel] = parse_unit(sources[rel], rel) if rel in sources else None
        units[rel] = inject_ast(units[rel], model)
    out = {}
    for rel, unit in units.items():
        assert unit is not None
        text = print_unit(unit)
        if sources.get(rel) != text:
            out[rel] = text
    return out


# ---------------------------------------------------------------------------
# writing


def write_sources(repo: str | os.PathLike, edits: Iterable[tuple[str, str]]) -> list[Path]:
    """Write every edit or none of them.

    Each file is staged to a temporary sibling, then all are renamed into
    place. If anything fails, files already replaced get their original bytes
    back and files that did not exist are removed again.
    """
    root = Path(repo)
    plan: list[tuple[Path, str]] = []
    for rel, text in edits:
        path = Path(rel) if os.path.isabs(rel) else root / rel
        if path.suffix == SOURCE_SUFFIX:
            try:
                parse_unit(text, path.relative_to(root).as_posix() if not os.path.isabs(rel) else path.name)
            except SourceSyntaxError as exc:
                raise InjectionError(f"refusing to write unparsable source: {exc}") from exc
        plan.append((path, text))
    if not plan:
        return []

    originals: dict[Path, bytes | None] = {}
    staged: list[tuple[Path, str]] = []
    replaced: list[Path] = []
    created_dirs: list[Path] = []
    try:
        for path, text in plan:
            originals[path] = path.read_bytes() if path.exists() else None
            if not path.parent.exists():
                path.parent.mkdir(parents=True)
                created_dirs.append(path.parent)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            staged.append((path, tmp))
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
                fh.flush()
                os.fsync(fh.fileno())
        for path, tmp in staged:
            os.replace(tmp, path)
            replaced.append(path)
    except Exception as exc:
        report = _rollback(originals, staged, replaced, created_dirs)
        raise SourceWriteError(f"write failed ({exc}); rolled back", report) from exc
    return [p for p, _ in plan]


def _rollback(originals, staged, replaced, created_dirs) -> list[str]:
    report = []
    for path, tmp in staged:
        if os.path.exists(tmp):
            os.unlink(tmp)
    for path in replaced:
        before = originals[path]
        try:
            if before is None:
                path.unlink()
                report.append(f"removed {path}")
            else:
                path.write_bytes(before)
                report.append(f"restored {path}")
        except OSError as exc:  # pragma: no cover - last resort
            report.append(f"could not restore {path}: {exc}")
            log.error("rollback failed for %s: %s", path, exc)
    for d in reversed(created_dirs):
        try:
            d.rmdir()
        except OSError:
            pass
    return report
