"""Transformation catalog and the extract -> transform -> inject orchestration.

Every catalog operation checks its preconditions, builds an explicit
:class:`~parthenos.graph.Production`, matches it (exactly one match is
expected) and applies it with single-pushout semantics.
"""
from __future__ import annotations

import contextlib
import errno
import functools
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Mapping

from . import schema as S
from .dialect import BUILTIN_TYPES, RESERVED
from .extraction import extract_sources, read_sources
from .graph import (
    Delta,
    Edge,
    KnowledgeBase,
    PatternGraph,
    Production,
    Property,
    Value,
    Vertex,
    apply_spo,
    find_matches,
    serialize_kb,
)
from .injection import InjectionError, apply_models, plan_injection, typecheck_delta, write_sources

log = logging.getLogger(__name__)

__all__ = [
    "LOCK_NAME",
    "OPERATIONS",
    "RepoLockedError",
    "RequestError",
    "TransformationOutcome",
    "TransformationRequest",
    "add_attribute",
    "apply_transformation",
    "create_class",
    "dispatch",
    "ui_create_element",
    "ui_remove_element",
    "ui_set_property",
]

LOCK_NAME = "parthenos.lock"
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")

# required and optional keys per request op
OPERATIONS: dict[str, tuple[frozenset, frozenset]] = {
    "create_class": (frozenset({"name"}), frozenset({"superclass"})),
    "add_attribute": (frozenset({"class", "name", "type"}), frozenset()),
    "create_panel": (frozenset({"class"}), frozenset({"label", "position", "visible"})),
    "create_field": (frozenset({"class", "attribute"}), frozenset({"label", "position", "visible"})),
    "remove_panel": (frozenset({"class"}), frozenset()),
    "remove_field": (frozenset({"class", "attribute"}), frozenset()),
    "set_label": (frozenset({"kind", "class", "value"}), frozenset({"attribute"})),
    "set_position": (frozenset({"kind", "class", "value"}), frozenset({"attribute"})),
    "set_visibility": (frozenset({"kind", "class", "value"}), frozenset({"attribute"})),
}


class RequestError(ValueError):
    pass


class RepoLockedError(RuntimeError):
    pass


class Rejected(Exception):
    def __init__(self, code: str, subject: str):
        super().__init__(f"{code}: {subject}")
        self.code = code
        self.subject = subject


@dataclass(frozen=True)
class TransformationRequest:
    op: str
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.op not in OPERATIONS:
            raise RequestError(f"unknown operation {self.op!r}")
        required, optional = OPERATIONS[self.op]
        keys = set(self.params)
        missing = required - keys
        extra = keys - required - optional
        if missing:
            raise RequestError(f"{self.op}: missing parameter(s) {sorted(missing)}")
        if extra:
            raise RequestError(f"{self.op}: unexpected parameter(s) {sorted(extra)}")

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> TransformationRequest:
        if not isinstance(data, Mapping) or "op" not in data:
            raise RequestError("request must be an object with an 'op' key")
        params = data.get("params") or {}
        if not isinstance(params, Mapping):
            raise RequestError("'params' must be an object")
        return cls(data["op"], dict(params))

    def to_json(self) -> dict:
        return {"op": self.op, "params": dict(self.params)}


@dataclass(frozen=True)
class TransformationOutcome:
    status: str  # "applied" | "rejected"
    kb_after: KnowledgeBase
    delta: Delta = Delta()
    reason: str | None = None
    production: Production | None = None
    written: tuple[str, ...] = ()

    @property
    def applied(self) -> bool:
        return self.status == "applied"

    @property
    def code(self) -> str | None:
        return self.reason.split(":", 1)[0] if self.reason else None


# ---------------------------------------------------------------------------
# rule building


class _Rule:
    """Small builder for productions whose preserved elements keep their ids."""

    def __init__(self, name: str):
        self.name = name
        self.lhs_v: list[Vertex] = []
        self.lhs_e: list[Edge] = []
        self.lhs_p: list[Property] = []
        self.rhs_v: list[Vertex] = []
        self.rhs_e: list[Edge] = []
        self.rhs_p: list[Property] = []
        self.mapping: dict[str, str] = {}
        self.params: list[str] = []

    def keep(self, vid: str, label: str, /, **props: Value) -> str:
        self.lhs_v.append(Vertex(vid, label))
        self.rhs_v.append(Vertex(vid, label))
        self.mapping[vid] = vid
        for k, v in props.items():
            self.lhs_p.append(Property(vid, k, v))
            self.rhs_p.append(Property(vid, k, v))
        return vid

    def keep_edge(self, eid: str, src: str, dst: str, label: str) -> None:
        self.lhs_e.append(Edge(eid, src, dst, label))
        self.rhs_e.append(Edge(eid, src, dst, label))
        self.mapping[eid] = eid

    def delete(self, vid: str, label: str) -> None:
        self.lhs_v.append(Vertex(vid, label))

    def change(self, owner: str, key: str, old: Value, new: Value) -> None:
        self.lhs_p.append(Property(owner, key, old))
        self.rhs_p.append(Property(owner, key, new))

    def add(self, vid: str, label: str, /, **props: Value) -> str:
        self.rhs_v.append(Vertex(vid, label))
        self.rhs_p.extend(Property(vid, k, v) for k, v in props.items())
        return vid

    def add_edge(self, eid: str, src: str, dst: str, label: str) -> None:
        self.rhs_e.append(Edge(eid, src, dst, label))

    def param(self, *names: str) -> None:
        self.params.extend(names)

    def build(self) -> Production:
        return Production(
            self.name,
            PatternGraph(self.lhs_v, self.lhs_e, self.lhs_p),
            PatternGraph(self.rhs_v, self.rhs_e, self.rhs_p),
            self.mapping,
            tuple(self.params),
        )


def _rewrite(kb: KnowledgeBase, prod: Production, bindings: Mapping[str, Value]) -> TransformationOutcome:
    lhs_bindings = {k: v for k, v in bindings.items() if k not in prod.params}
    matches = find_matches(prod.lhs, lhs_bindings, kb)
    if len(matches) != 1:
        raise AssertionError(f"{prod.name}: expected exactly one match, found {len(matches)}")
    match = matches[0]
    full = dict(match.assignment)
    full.update(bindings)
    kb_after, delta = apply_spo(prod, type(match)(full), kb)
    return TransformationOutcome("applied", kb_after, delta, production=prod)


def _rejected(kb: KnowledgeBase, exc: Rejected) -> TransformationOutcome:
    return TransformationOutcome("rejected", kb, Delta(), reason=str(exc))


def _catalog(fn):
    @functools.wraps(fn)
    def wrapper(kb: KnowledgeBase, *args, **kwargs) -> TransformationOutcome:
        try:
            return fn(kb, *args, **kwargs)
        except Rejected as exc:
            log.info("rejected: %s", exc)
            return _rejected(kb, exc)

    return wrapper


def _check_identifier(name: Any, what: str) -> str:
    if not isinstance(name, str) or not _IDENT.match(name) or name in RESERVED:
        raise Rejected("InvalidName", f"{what} {name!r}")
    return name


def _class_exists(kb: KnowledgeBase, name: str) -> bool:
    return kb.label(S.class_id(name)) == "class"


def _superclasses(kb: KnowledgeBase, cls: str) -> list[str]:
    chain, seen = [], {cls}
    current = S.class_id(cls)
    while True:
        ext = kb.out_edges(current, "extends")
        if not ext:
            return chain
        current = ext[0].dst
        name = S.type_name_of(current)
        if name in seen:
            return chain
        seen.add(name)
        chain.append(name)


def _position(kb: KnowledgeBase, element: str) -> int:
    value = kb.prop(element, "position", 0)
    return value if isinstance(value, int) and not isinstance(value, bool) else 0


def _panels(kb: KnowledgeBase) -> list[str]:
    return sorted((v.id for v in kb.by_label("panel")), key=lambda p: (_position(kb, p), p))


def _panel_fields(kb: KnowledgeBase, panel: str) -> list[str]:
    return sorted((e.dst for e in kb.out_edges(panel, "has_field")), key=lambda f: (_position(kb, f), f))


def _renumber(rule: _Rule, kb: KnowledgeBase, ordered: list[str], skip: str | None = None) -> None:
    """Make positions of ``ordered`` a permutation 1..n, recording changes in ``rule``."""
    for i, element in enumerate(ordered, 1):
        if element == skip:
            continue
        old = kb.prop(element, "position")
        if old != i or type(old) is not int:
            label = kb.vertices[element].label
            rule.keep(element, label)
            rule.change(element, "position", old, i)  # type: ignore[arg-type]


def _check_ui_value(key: str, value: Any) -> None:
    ok = {
        "label": isinstance(value, str),
        "position": isinstance(value, int) and not isinstance(value, bool) and value >= 1,
        "visible": isinstance(value, bool),
    }[key]
    if not ok:
        raise Rejected("BadValueType", f"{key}={value!r}")


# ---------------------------------------------------------------------------
# catalog


@_catalog
def create_class(kb: KnowledgeBase, name: str, superclass: str | None = None) -> TransformationOutcome:
    _check_identifier(name, "class name")
    if name in BUILTIN_TYPES:
        raise Rejected("InvalidName", f"class name {name!r}")
    if _class_exists(kb, name):
        raise Rejected("DuplicateClass", name)
    rule = _Rule("create_class")
    bindings: dict[str, Value] = {"?name": name, "?file": S.source_file_for(name)}
    rule.param("?name", "?file")
    new = rule.add("class:{?name}", "class", name="?name", source_file="?file")
    if superclass is not None:
        _check_identifier(superclass, "superclass name")
        if not _class_exists(kb, superclass):
            raise Rejected("SuperclassNotFound", superclass)
        sup = rule.keep("?sup", "class", name="?supname")
        bindings["?supname"] = superclass
        rule.add_edge("e:extends:{?name}", new, sup, "extends")
    return _rewrite(kb, rule.build(), bindings)


@_catalog
def add_attribute(kb: KnowledgeBase, class_name: str, attr_name: str, type_name: str) -> TransformationOutcome:
    """Add a typed attribute plus its generated get/set accessors."""
    _check_identifier(attr_name, "attribute name")
    if not isinstance(class_name, str) or not _class_exists(kb, class_name):
        raise Rejected("ClassNotFound", str(class_name))
    if not isinstance(type_name, str):
        raise Rejected("TypeNotFound", str(type_name))
    if type_name in BUILTIN_TYPES and type_name != "void":
        type_vertex, type_label = S.type_id(type_name), "type"
    elif type_name not in BUILTIN_TYPES and _class_exists(kb, type_name):
        type_vertex, type_label = S.class_id(type_name), "class"
    else:
        raise Rejected("TypeNotFound", type_name)

    for owner in [class_name, *_superclasses(kb, class_name)]:
        if S.attr_id(owner, attr_name) in kb.vertices:
            raise Rejected("DuplicateAttribute", f"{owner}.{attr_name}")
    getter, setter = S.accessor_names(attr_name)
    for member in (attr_name, getter, setter):
        if S.method_id(class_name, member) in kb.vertices:
            raise Rejected("DuplicateMember", f"{class_name}.{member}")

    rule = _Rule("add_attribute")
    c = rule.keep("?c", "class", name="?cls")
    if type_vertex == S.class_id(class_name):
        t = c
    else:
        t = rule.keep(type_vertex, type_label)
    void = rule.keep(S.type_id("void"), "type")
    rule.param("?attr", "?getter", "?setter")

    a = rule.add("attr:{?cls}.{?attr}", "attribute", name="?attr")
    rule.add_edge("e:has_attribute:{?cls}.{?attr}", c, a, "has_attribute")
    rule.add_edge("e:has_type:{?cls}.{?attr}", a, t, "has_type")
    for var, returns in (("?getter", t), ("?setter", void)):
        slot = "{" + var + "}"
        m = rule.add(f"method:{{?cls}}.{slot}", "method", name=var, generated=True)
        rule.add_edge(f"e:has_method:{{?cls}}.{slot}", c, m, "has_method")
        rule.add_edge(f"e:returns:{{?cls}}.{slot}", m, returns, "returns")
    bindings = {"?cls": class_name, "?attr": attr_name, "?getter": getter, "?setter": setter}
    return _rewrite(kb, rule.build(), bindings)


def _create_panel(kb, cls, label, position, visible) -> TransformationOutcome:
    if not isinstance(cls, str) or not _class_exists(kb, cls):
        raise Rejected("TargetNotFound", str(cls))
    if S.panel_id(cls) in kb.vertices:
        raise Rejected("DuplicateElement", S.panel_id(cls))
    ordered = _panels(kb)
    label = cls if label is None else label
    position = len(ordered) + 1 if position is None else position
    visible = True if visible is None else visible
    for key, value in (("label", label), ("position", position), ("visible", visible)):
        _check_ui_value(key, value)
    if position > len(ordered) + 1:
        raise Rejected("BadValueType", f"position={position} exceeds {len(ordered) + 1}")

    rule = _Rule("create_panel")
    new_id = S.panel_id(cls)
    ordered.insert(position - 1, new_id)
    _renumber(rule, kb, ordered, skip=new_id)
    c = rule.keep("?c", "class", name="?cls")
    rule.param("?label", "?position", "?visible")
    p = rule.add("panel:{?cls}", "panel", label="?label", position="?position", visible="?visible")
    rule.add_edge("e:represents:{?cls}", p, c, "represents")
    bindings = {"?cls": cls, "?label": label, "?position": position, "?visible": visible}
    return _rewrite(kb, rule.build(), bindings)


def _create_field(kb, cls, attr, label, position, visible) -> TransformationOutcome:
    if not isinstance(cls, str) or not _class_exists(kb, cls):
        raise Rejected("TargetNotFound", str(cls))
    if not isinstance(attr, str) or S.attr_id(cls, attr) not in kb.vertices:
        raise Rejected("TargetNotFound", f"{cls}.{attr}")
    pid = S.panel_id(cls)
    if pid not in kb.vertices:
        raise Rejected("PanelMissing", cls)
    if S.field_id(cls, attr) in kb.vertices:
        raise Rejected("DuplicateElement", S.field_id(cls, attr))
    ordered = _panel_fields(kb, pid)
    label = attr if label is None else label
    position = len(ordered) + 1 if position is None else position
    visible = True if visible is None else visible
    for key, value in (("label", label), ("position", position), ("visible", visible)):
        _check_ui_value(key, value)
    if position > len(ordered) + 1:
        raise Rejected("BadValueType", f"position={position} exceeds {len(ordered) + 1}")

    rule = _Rule("create_field")
    new_id = S.field_id(cls, attr)
    ordered.insert(position - 1, new_id)
    _renumber(rule, kb, ordered, skip=new_id)
    c = rule.keep("?c", "class", name="?cls")
    p = rule.keep("?p", "panel")
    rule.keep_edge("?rep", p, c, "represents")
    a = rule.keep("?a", "attribute", name="?attr")
    rule.keep_edge("?has", c, a, "has_attribute")
    rule.param("?label", "?position", "?visible")
    f = rule.add("field:{?cls}.{?attr}", "field", label="?label", position="?position", visible="?visible")
    rule.add_edge("e:reflects:{?cls}.{?attr}", f, a, "reflects")
    rule.add_edge("e:has_field:{?cls}.{?attr}", p, f, "has_field")
    bindings = {"?cls": cls, "?attr": attr, "?label": label, "?position": position, "?visible": visible}
    return _rewrite(kb, rule.build(), bindings)


@_catalog
def ui_create_element(
    kb: KnowledgeBase,
    kind: str,
    target: str | tuple[str, str],
    label: str | None = None,
    position: int | None = None,
    visible: bool | None = None,
) -> TransformationOutcome:
    """Create a panel (``target`` = class) or a field (``target`` = (class, attribute))."""
    if kind == "panel":
        return _create_panel(kb, target, label, position, visible)
    if kind == "field":
        cls, attr = target
        return _create_field(kb, cls, attr, label, position, visible)
    raise Rejected("BadValueType", f"kind={kind!r}")


def _element(kb: KnowledgeBase, kind: str, target) -> str:
    if kind == "panel":
        element = S.panel_id(target)
    elif kind == "field":
        if not isinstance(target, (tuple, list)) or len(target) != 2:
            raise Rejected("TargetNotFound", str(target))
        element = S.field_id(*target)
    else:
        raise Rejected("BadValueType", f"kind={kind!r}")
    if kb.label(element) != kind:
        raise Rejected("TargetNotFound", element)
    return element


def _siblings(kb: KnowledgeBase, element: str) -> list[str]:
    if kb.vertices[element].label == "panel":
        return _panels(kb)
    owner = kb.in_edges(element, "has_field")[0].src
    return _panel_fields(kb, owner)


@_catalog
def ui_remove_element(kb: KnowledgeBase, kind: str, target) -> TransformationOutcome:
    """Remove a panel (with its fields) or a single field."""
    element = _element(kb, kind, target)
    rule = _Rule(f"remove_{kind}")
    ordered = _siblings(kb, element)
    ordered.remove(element)
    _renumber(rule, kb, ordered)
    rule.delete(element, kind)
    if kind == "panel":
        for fid in _panel_fields(kb, element):
            rule.delete(fid, "field")
    return _rewrite(kb, rule.build(), {})


@_catalog
def ui_set_property(kb: KnowledgeBase, kind: str, target, key: str, value: Value) -> TransformationOutcome:
    element = _element(kb, kind, target)
    if key not in S.UI_KEYS:
        raise Rejected("BadValueType", f"key={key!r}")
    _check_ui_value(key, value)
    rule = _Rule(f"set_{key}")
    if key == "position":
        ordered = _siblings(kb, element)
        if value > len(ordered):  # type: ignore[operator]
            raise Rejected("BadValueType", f"position={value} exceeds {len(ordered)}")
        ordered.remove(element)
        ordered.insert(value - 1, element)  # type: ignore[operator]
        _renumber(rule, kb, ordered, skip=element)
    rule.keep("?x", kind)
    rule.change("?x", key, "?old", "?new")
    rule.param("?new")
    return _rewrite(kb, rule.build(), {"?x": element, "?new": value})


def dispatch(kb: KnowledgeBase, req: TransformationRequest) -> TransformationOutcome:
    """Run one request against ``kb`` without touching any files."""
    p = dict(req.params)
    op = req.op
    if op == "create_class":
        return create_class(kb, p["name"], p.get("superclass"))
    if op == "add_attribute":
        return add_attribute(kb, p["class"], p["name"], p["type"])
    if op == "create_panel":
        return ui_create_element(kb, "panel", p["class"], p.get("label"), p.get("position"), p.get("visible"))
    if op == "create_field":
        return ui_create_element(
            kb, "field", (p["class"], p["attribute"]), p.get("label"), p.get("position"), p.get("visible")
        )
    if op == "remove_panel":
        return ui_remove_element(kb, "panel", p["class"])
    if op == "remove_field":
        return ui_remove_element(kb, "field", (p["class"], p["attribute"]))
    key = {"set_label": "label", "set_position": "position", "set_visibility": "visible"}[op]
    target = p["class"] if p["kind"] == "panel" else (p["class"], p.get("attribute"))
    return ui_set_property(kb, p["kind"], target, key, p["value"])


# ---------------------------------------------------------------------------
# orchestration


@contextlib.contextmanager
def repo_lock(repo: str | os.PathLike) -> Iterator[Path]:
    path = Path(repo) / LOCK_NAME
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise RepoLockedError(f"{repo} is locked by another transformation ({path})") from None
    except OSError as exc:
        if exc.errno == errno.ENOENT:
            raise FileNotFoundError(f"repository not found: {repo}") from None
        raise
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield path
    finally:
        with contextlib.suppress(FileNotFoundError):
            path.unlink()


def apply_transformation(
    kb: KnowledgeBase,
    repo: str | os.PathLike,
    req: TransformationRequest,
    kb_path: str | os.PathLike | None = None,
) -> TransformationOutcome:
    """Transform ``kb``, inject the change into ``repo`` and persist both.

    Nothing is written unless the edited sources parse, the delta type-checks
    and re-extracting the edited sources reproduces the transformed model.
    """
    with repo_lock(repo):
        outcome = dispatch(kb, req)
        if not outcome.applied:
            return outcome
        violations = typecheck_delta(kb, outcome.delta)
        if violations:
            return TransformationOutcome("rejected", kb, Delta(), reason=str(violations[0]))
        if not outcome.delta:
            return outcome

        models = plan_injection(outcome.delta, kb)
        sources = read_sources(repo)
        try:
            changed = apply_models(sources, models)
        except KeyError as exc:
            raise InjectionError(f"injection model lacks parameter {exc}") from None
        merged = {**sources, **changed}
        resynced = extract_sources(merged)
        if resynced != outcome.kb_after:
            missing = sorted(f.render() for f in outcome.kb_after.facts - resynced.facts)
            extra = sorted(f.render() for f in resynced.facts - outcome.kb_after.facts)
            raise InjectionError(
                f"sources and model out of sync after {req.op}: missing {missing[:5]}, unexpected {extra[:5]}"
            )
        edits = sorted(changed.items())
        if kb_path is not None:
            edits.append((os.fspath(Path(kb_path).resolve()), serialize_kb(outcome.kb_after)))
        write_sources(repo, edits)
        log.info("%s: wrote %d file(s)", req.op, len(edits))
        return TransformationOutcome(
            "applied",
            outcome.kb_after,
            outcome.delta,
            production=outcome.production,
            written=tuple(rel for rel, _ in sorted(changed.items())),
        )
