"""Labeled graph knowledge base, Prolog fact files, and single-pushout rewriting.

A knowledge base is a set of facts of three kinds::

    vertex('class:Book', class).
    edge('e:has_attribute:Book.title', 'class:Book', 'attr:Book.title', has_attribute).
    property('class:Book', name, 'Book').

Pattern graphs reuse the same fact types. Ids and property values that start
with ``?`` are variables; ids in a right-hand side may embed ``{?var}``
placeholders, which are expanded when new elements are created.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

__all__ = [
    "HEADER",
    "Delta",
    "DanglingEdgeError",
    "DuplicateIdError",
    "Edge",
    "FactSyntaxError",
    "IdCollisionError",
    "KnowledgeBase",
    "KnowledgeBaseError",
    "Match",
    "PatternGraph",
    "Production",
    "Property",
    "Vertex",
    "apply_spo",
    "find_matches",
    "kb_diff",
    "parse_kb",
    "serialize_kb",
]

HEADER = "% parthenos knowledge base v1"

Value = Union[str, int, bool]

_ATOM = re.compile(r"[a-z][A-Za-z0-9_]*\Z")


class KnowledgeBaseError(ValueError):
    pass


class FactSyntaxError(KnowledgeBaseError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DanglingEdgeError(KnowledgeBaseError):
    def __init__(self, edge_id: str, message: str = ""):
        super().__init__(message or f"edge {edge_id!r} references a missing vertex")
        self.edge_id = edge_id


class DuplicateIdError(KnowledgeBaseError):
    def __init__(self, element_id: str, message: str = ""):
        super().__init__(message or f"duplicate id {element_id!r}")
        self.element_id = element_id


class OrphanPropertyError(KnowledgeBaseError):
    def __init__(self, owner: str):
        super().__init__(f"property owner {owner!r} is not a vertex or edge")
        self.owner = owner


class IdCollisionError(KnowledgeBaseError):
    def __init__(self, element_id: str):
        super().__init__(f"generated id {element_id!r} already exists")
        self.element_id = element_id


# ---------------------------------------------------------------------------
# facts


_NAMED_ESCAPES = {"\\": "\\\\", "'": "\\'", "\n": "\\n", "\r": "\\r", "\t": "\\t"}


def _escape_char(ch: str) -> str:
    if ch in _NAMED_ESCAPES:
        return _NAMED_ESCAPES[ch]
    code = ord(ch)
    # anything str.splitlines() would break on, plus other control characters
    if code < 0x20 or code == 0x7F or code == 0x85 or code in (0x2028, 0x2029):
        return f"\\x{code:x}\\"
    return ch


def _quote(atom: str) -> str:
    return "'" + "".join(_escape_char(ch) for ch in atom) + "'"


def _render_value(value: Value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    return _quote(value)


@dataclass(frozen=True, order=True)
class Vertex:
    id: str
    label: str

    def render(self) -> str:
        return f"vertex({_quote(self.id)}, {self.label})."


@dataclass(frozen=True, order=True)
class Edge:
    id: str
    src: str
    dst: str
    label: str

    def render(self) -> str:
        return f"edge({_quote(self.id)}, {_quote(self.src)}, {_quote(self.dst)}, {self.label})."


@dataclass(frozen=True, eq=False)
class Property:
    owner: str
    key: str
    value: Value

    # bool is an int subclass; keep True and 1 distinct
    def _key(self) -> tuple:
        return (self.owner, self.key, type(self.value).__name__, self.value)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Property):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def render(self) -> str:
        return f"property({_quote(self.owner)}, {self.key}, {_render_value(self.value)})."


Fact = Union[Vertex, Edge, Property]


def _check_atom(atom: str, what: str) -> None:
    if not _ATOM.match(atom):
        raise KnowledgeBaseError(f"{what} {atom!r} is not a plain lowercase atom")


# ---------------------------------------------------------------------------
# knowledge base


class KnowledgeBase:
    """Immutable, validated set of facts.

    Invariants: edge endpoints are existing vertices, ids are unique across
    vertices and edges, every property owner exists, and there is at most one
    property per ``(owner, key)``.
    """

    __slots__ = ("_vertices", "_edges", "_props", "_facts", "_incident")

    def __init__(self, facts: Iterable[Fact] = ()):
        vertices: dict[str, Vertex] = {}
        edges: dict[str, Edge] = {}
        props: dict[tuple[str, str], Property] = {}
        facts = list(facts)
        for f in facts:
            if isinstance(f, Vertex):
                _check_atom(f.label, "vertex label")
                if f.id in vertices:
                    if vertices[f.id] == f:
                        continue
                    raise DuplicateIdError(f.id)
                vertices[f.id] = f
            elif isinstance(f, Edge):
                _check_atom(f.label, "edge label")
                if f.id in edges:
                    if edges[f.id] == f:
                        continue
                    raise DuplicateIdError(f.id)
                edges[f.id] = f
            elif isinstance(f, Property):
                _check_atom(f.key, "property key")
                slot = (f.owner, f.key)
                if slot in props:
                    if props[slot] == f:
                        continue
                    raise DuplicateIdError(
                        f.owner, f"more than one {f.key!r} property on {f.owner!r}"
                    )
                props[slot] = f
            else:
                raise TypeError(f"not a fact: {f!r}")
        for eid in edges:
            if eid in vertices:
                raise DuplicateIdError(eid)
        incident: dict[str, list[str]] = {}
        for e in edges.values():
            if e.src not in vertices or e.dst not in vertices:
                raise DanglingEdgeError(e.id)
            incident.setdefault(e.src, []).append(e.id)
            if e.dst != e.src:
                incident.setdefault(e.dst, []).append(e.id)
        for owner, _ in props:
            if owner not in vertices and owner not in edges:
                raise OrphanPropertyError(owner)
        self._vertices = vertices
        self._edges = edges
        self._props = props
        self._incident = incident
        self._facts = frozenset(vertices.values()) | frozenset(edges.values()) | frozenset(props.values())

    # -- accessors
    @property
    def vertices(self) -> Mapping[str, Vertex]:
        return self._vertices

    @property
    def edges(self) -> Mapping[str, Edge]:
        return self._edges

    @property
    def properties(self) -> Mapping[tuple[str, str], Property]:
        return self._props

    @property
    def facts(self) -> frozenset[Fact]:
        return self._facts

    def __len__(self) -> int:
        return len(self._facts)

    def __contains__(self, item: object) -> bool:
        return item in self._facts

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return self._facts == other._facts

    def __hash__(self) -> int:
        return hash(self._facts)

    def __repr__(self) -> str:
        return (
            f"KnowledgeBase({len(self._vertices)} vertices, {len(self._edges)} edges, "
            f"{len(self._props)} properties)"
        )

    def has(self, element_id: str) -> bool:
        return element_id in self._vertices or element_id in self._edges

    def label(self, element_id: str) -> str | None:
        if element_id in self._vertices:
            return self._vertices[element_id].label
        if element_id in self._edges:
            return self._edges[element_id].label
        return None

    def prop(self, owner: str, key: str, default: Value | None = None) -> Value | None:
        p = self._props.get((owner, key))
        return default if p is None else p.value

    def props_of(self, owner: str) -> list[Property]:
        return [p for (o, _), p in self._props.items() if o == owner]

    def incident(self, vertex_id: str) -> list[Edge]:
        return [self._edges[e] for e in self._incident.get(vertex_id, ())]

    def out_edges(self, vertex_id: str, label: str | None = None) -> list[Edge]:
        return sorted(
            e for e in self.incident(vertex_id) if e.src == vertex_id and (label is None or e.label == label)
        )

    def in_edges(self, vertex_id: str, label: str | None = None) -> list[Edge]:
        return sorted(
            e for e in self.incident(vertex_id) if e.dst == vertex_id and (label is None or e.label == label)
        )

    def by_label(self, label: str) -> list[Vertex]:
        return sorted(v for v in self._vertices.values() if v.label == label)

    # -- derivation
    def apply(self, delta: Delta) -> KnowledgeBase:
        return KnowledgeBase((self._facts - delta.removed) | delta.added)

    def with_facts(self, facts: Iterable[Fact]) -> KnowledgeBase:
        return KnowledgeBase(self._facts | frozenset(facts))


@dataclass(frozen=True)
class Delta:
    added: frozenset = frozenset()
    removed: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "added", frozenset(self.added))
        object.__setattr__(self, "removed", frozenset(self.removed))
        overlap = self.added & self.removed
        if overlap:
            raise ValueError(f"facts both added and removed: {sorted(f.render() for f in overlap)}")

    def __bool__(self) -> bool:
        return bool(self.added or self.removed)

    def then(self, other: Delta) -> Delta:
        """Compose two consecutive deltas into one net change."""
        added = (self.added - other.removed) | other.added
        removed = (self.removed - other.added) | (other.removed - self.added)
        return Delta(added - removed, removed - added)


def kb_diff(before: KnowledgeBase, after: KnowledgeBase) -> Delta:
    return Delta(after.facts - before.facts, before.facts - after.facts)


# ---------------------------------------------------------------------------
# fact text


def serialize_kb(kb: KnowledgeBase) -> str:
    blocks = [
        sorted(f.render() for f in kb.vertices.values()),
        sorted(f.render() for f in kb.edges.values()),
        sorted(f.render() for f in kb.properties.values()),
    ]
    lines = [HEADER]
    for block in blocks:
        lines.extend(block)
    return "\n".join(lines) + "\n"


_TERM = re.compile(
    r"""\s*(?:
        (?P<quoted>'(?:[^'\\\n]|\\x[0-9a-fA-F]+\\|\\.)*')
      | (?P<atom>[a-z][A-Za-z0-9_]*)
      | (?P<int>-?[0-9]+)
    )\s*""",
    re.VERBOSE,
)
_CLAUSE = re.compile(r"(?P<functor>vertex|edge|property)\((?P<args>.*)\)\.\Z")
_ESCAPE = re.compile(r"\\(?:x([0-9a-fA-F]+)\\|(.))")
_UNESCAPE = {"n": "\n", "r": "\r", "t": "\t"}


def _unescape(m: re.Match) -> str:
    if m.group(1) is not None:
        return chr(int(m.group(1), 16))
    return _UNESCAPE.get(m.group(2), m.group(2))


def _parse_args(text: str, lineno: int) -> list[tuple[str, Value]]:
    args: list[tuple[str, Value]] = []
    pos = 0
    while True:
        m = _TERM.match(text, pos)
        if not m:
            raise FactSyntaxError(lineno, f"bad term near {text[pos:pos + 20]!r}")
        if m.group("quoted") is not None:
            raw = m.group("quoted")[1:-1]
            args.append(("quoted", _ESCAPE.sub(_unescape, raw)))
        elif m.group("atom") is not None:
            args.append(("atom", m.group("atom")))
        else:
            args.append(("int", int(m.group("int"))))
        pos = m.end()
        if pos == len(text):
            return args
        if text[pos] != ",":
            raise FactSyntaxError(lineno, f"expected ',' near {text[pos:pos + 20]!r}")
        pos += 1


def parse_kb(text: str) -> KnowledgeBase:
    """Read a fact file. Blank lines and ``%`` comment lines are ignored."""
    facts: list[Fact] = []
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.strip()
        if not line or line.startswith("%"):
            continue
        m = _CLAUSE.match(line)
        if not m:
            raise FactSyntaxError(lineno, f"not a fact clause: {line[:40]!r}")
        functor = m.group("functor")
        args = _parse_args(m.group("args"), lineno)
        kinds = [k for k, _ in args]
        vals = [v for _, v in args]
        if functor == "vertex" and kinds == ["quoted", "atom"]:
            facts.append(Vertex(*vals))
        elif functor == "edge" and kinds == ["quoted", "quoted", "quoted", "atom"]:
            facts.append(Edge(*vals))
        elif functor == "property" and len(args) == 3 and kinds[:2] == ["quoted", "atom"]:
            kind, value = args[2]
            if kind == "atom":
                if value not in ("true", "false"):
                    raise FactSyntaxError(lineno, f"unquoted atom value {value!r}")
                value = value == "true"
            facts.append(Property(vals[0], vals[1], value))
        else:
            raise FactSyntaxError(lineno, f"wrong arguments for {functor}/{len(args)}")
    return KnowledgeBase(facts)


# ---------------------------------------------------------------------------
# patterns and productions


def is_var(term: object) -> bool:
    return isinstance(term, str) and term.startswith("?")


_PLACEHOLDER = re.compile(r"\{(\?[A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class PatternGraph:
    vertices: tuple[Vertex, ...] = ()
    edges: tuple[Edge, ...] = ()
    properties: tuple[Property, ...] = ()

    def __post_init__(self):
        for name in ("vertices", "edges", "properties"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        ids = [v.id for v in self.vertices] + [e.id for e in self.edges]
        if len(set(ids)) != len(ids):
            raise DuplicateIdError(next(i for i in ids if ids.count(i) > 1))
        vids = {v.id for v in self.vertices}
        for e in self.edges:
            if e.src not in vids or e.dst not in vids:
                raise DanglingEdgeError(e.id)
        for p in self.properties:
            if p.owner not in ids:
                raise OrphanPropertyError(p.owner)

    def element_ids(self) -> list[str]:
        return [v.id for v in self.vertices] + [e.id for e in self.edges]

    def variables(self) -> set[str]:
        out = {i for i in self.element_ids() if is_var(i)}
        out.update(p.value for p in self.properties if is_var(p.value))
        return out


@dataclass(frozen=True)
class Production:
    """A rewrite rule: ``lhs`` is matched, ``rhs`` is what replaces it.

    ``mapping`` is the partial morphism from lhs element ids to rhs element
    ids; unmapped lhs elements are deleted, unmapped rhs elements are created.
    ``params`` lists variables supplied by the caller rather than matched.
    """

    name: str
    lhs: PatternGraph
    rhs: PatternGraph
    mapping: Mapping[str, str] = field(default_factory=dict)
    params: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))
        object.__setattr__(self, "params", tuple(self.params))
        images = list(self.mapping.values())
        if len(set(images)) != len(images):
            raise ValueError(f"{self.name}: mapping is not injective")
        lhs_labels = {v.id: ("v", v.label) for v in self.lhs.vertices}
        lhs_labels.update({e.id: ("e", e.label) for e in self.lhs.edges})
        rhs_labels = {v.id: ("v", v.label) for v in self.rhs.vertices}
        rhs_labels.update({e.id: ("e", e.label) for e in self.rhs.edges})
        for src, dst in self.mapping.items():
            if src not in lhs_labels or dst not in rhs_labels:
                raise ValueError(f"{self.name}: mapping {src!r} -> {dst!r} names unknown elements")
            if lhs_labels[src] != rhs_labels[dst]:
                raise ValueError(f"{self.name}: mapping {src!r} -> {dst!r} changes the label")
        for e in self.lhs.edges:
            if e.id in self.mapping:
                image = next(x for x in self.rhs.edges if x.id == self.mapping[e.id])
                if (self.mapping.get(e.src), self.mapping.get(e.dst)) != (image.src, image.dst):
                    raise ValueError(f"{self.name}: preserved edge {e.id!r} changes endpoints")
        known = self.lhs.variables() | set(self.params)
        for p in self.rhs.properties:
            if is_var(p.value) and p.value not in known:
                raise ValueError(f"{self.name}: rhs variable {p.value!r} is never bound")
        for rid in self.rhs.element_ids():
            for var in _PLACEHOLDER.findall(rid):
                if var not in known:
                    raise ValueError(f"{self.name}: placeholder {var!r} in {rid!r} is never bound")


@dataclass(frozen=True)
class Match:
    """Total morphism from a pattern into a host graph, plus variable values."""

    assignment: Mapping[str, Value]

    def __getitem__(self, key: str) -> Value:
        return self.assignment[key]

    def sort_key(self, pattern: PatternGraph) -> tuple:
        return tuple(str(self.assignment[i]) for i in pattern.element_ids())


def _bind_term(term: Value, actual: Value, assign: dict[str, Value]) -> bool:
    """Unify one pattern term with a host value, extending ``assign``."""
    if is_var(term):
        if term in assign:
            bound = assign[term]
            return type(bound) is type(actual) and bound == actual
        assign[term] = actual
        return True
    return type(term) is type(actual) and term == actual


def find_matches(
    pattern: PatternGraph, bindings: Mapping[str, Value] | None, kb: KnowledgeBase
) -> list[Match]:
    """Every injective, label- and incidence-preserving morphism of ``pattern`` into ``kb``.

    Literal ids must map to themselves. Matches are returned sorted by the
    tuple of target ids, in pattern element order.
    """
    bindings = dict(bindings or {})
    results: list[Match] = []
    vertices = list(pattern.vertices)
    edges = list(pattern.edges)
    props_by_owner: dict[str, list[Property]] = {}
    for p in pattern.properties:
        props_by_owner.setdefault(p.owner, []).append(p)

    candidates: dict[str, list[str]] = {}
    for v in vertices:
        if is_var(v.id):
            pool = [x.id for x in kb.by_label(v.label)]
        else:
            pool = [v.id] if kb.label(v.id) == v.label and v.id in kb.vertices else []
        candidates[v.id] = pool

    def props_ok(owner_pattern: str, owner_actual: str, assign: dict[str, Value]) -> bool:
        for p in props_by_owner.get(owner_pattern, ()):
            fact = kb.properties.get((owner_actual, p.key))
            if fact is None or not _bind_term(p.value, fact.value, assign):
                return False
        return True

    def edges_between_ok(assign: dict[str, Value], upto: set[str]) -> bool:
        # cheap pruning: every pattern edge between assigned vertices needs some host edge
        for e in edges:
            if e.src in upto and e.dst in upto:
                s, d = assign[e.src], assign[e.dst]
                if not any(x.label == e.label and x.dst == d for x in kb.out_edges(s)):  # type: ignore[arg-type]
                    return False
        return True

    def extend_edges(i: int, assign: dict[str, Value], used: set[str]) -> None:
        if i == len(edges):
            results.append(Match(dict(assign)))
            return
        e = edges[i]
        s, d = assign[e.src], assign[e.dst]
        for host in kb.out_edges(s, e.label):  # type: ignore[arg-type]
            if host.dst != d or host.id in used:
                continue
            if not is_var(e.id) and host.id != e.id:
                continue
            if e.id in assign and assign[e.id] != host.id:
                continue
            trial = dict(assign)
            trial[e.id] = host.id
            if not props_ok(e.id, host.id, trial):
                continue
            used.add(host.id)
            extend_edges(i + 1, trial, used)
            used.discard(host.id)

    def extend_vertices(i: int, assign: dict[str, Value], used: set[str]) -> None:
        if i == len(vertices):
            extend_edges(0, assign, set())
            return
        v = vertices[i]
        for target in candidates[v.id]:
            if target in used:
                continue
            if v.id in assign and assign[v.id] != target:
                continue
            trial = dict(assign)
            trial[v.id] = target
            if not props_ok(v.id, target, trial):
                continue
            done = {x.id for x in vertices[: i + 1]}
            if not edges_between_ok(trial, done):
                continue
            used.add(target)
            extend_vertices(i + 1, trial, used)
            used.discard(target)

    extend_vertices(0, bindings, set())
    results.sort(key=lambda m: m.sort_key(pattern))
    return results


def _expand(template: str, assign: Mapping[str, Value]) -> str:
    return _PLACEHOLDER.sub(lambda m: str(assign[m.group(1)]), template)


def _resolve(term: Value, assign: Mapping[str, Value]) -> Value:
    if is_var(term):
        return assign[term]  # type: ignore[index]
    if isinstance(term, str):
        return _expand(term, assign)
    return term


def apply_spo(prod: Production, match: Match, kb: KnowledgeBase) -> tuple[KnowledgeBase, Delta]:
    """Apply ``prod`` at ``match`` with single-pushout semantics.

    Deletes unmapped lhs elements together with every edge left dangling and
    every property whose owner disappears, then adds the unmapped rhs
    elements. Raises :class:`IdCollisionError` if a created id is taken.
    """
    assign = dict(match.assignment)
    for pid in prod.lhs.element_ids():
        if pid not in assign:
            raise KnowledgeBaseError(f"{prod.name}: match does not assign {pid!r}")
    for var in prod.params:
        if var not in assign:
            raise KnowledgeBaseError(f"{prod.name}: parameter {var!r} not supplied")

    facts = set(kb.facts)
    doomed_vertices = {assign[v.id] for v in prod.lhs.vertices if v.id not in prod.mapping}
    doomed_edges = {assign[e.id] for e in prod.lhs.edges if e.id not in prod.mapping}
    for vid in doomed_vertices:
        doomed_edges.update(e.id for e in kb.incident(vid))  # type: ignore[arg-type]
    doomed = doomed_vertices | doomed_edges
    for vid in doomed_vertices:
        facts.discard(kb.vertices[vid])  # type: ignore[index]
    for eid in doomed_edges:
        facts.discard(kb.edges[eid])  # type: ignore[index]
    for p in kb.properties.values():
        if p.owner in doomed:
            facts.discard(p)

    rhs_props = {(prod.mapping.get(p.owner), p.key, p.value) for p in prod.rhs.properties}
    for p in prod.lhs.properties:
        kept = p.owner in prod.mapping and (prod.mapping[p.owner], p.key, p.value) in rhs_props
        if not kept:
            facts.discard(kb.properties[(assign[p.owner], p.key)])  # type: ignore[index]

    # rhs element id -> host id
    image = {rid: assign[lid] for lid, rid in prod.mapping.items()}
    live_ids = {f.id for f in facts if not isinstance(f, Property)}
    for v in prod.rhs.vertices:
        if v.id in image:
            continue
        new_id = _expand(v.id, assign)
        if new_id in live_ids:
            raise IdCollisionError(new_id)
        live_ids.add(new_id)
        image[v.id] = new_id
        facts.add(Vertex(new_id, v.label))
    for e in prod.rhs.edges:
        if e.id in image:
            continue
        new_id = _expand(e.id, assign)
        if new_id in live_ids:
            raise IdCollisionError(new_id)
        live_ids.add(new_id)
        image[e.id] = new_id
        facts.add(Edge(new_id, image[e.src], image[e.dst], e.label))  # type: ignore[arg-type]
    preserved = {(prod.mapping[p.owner], p.key, p.value) for p in prod.lhs.properties if p.owner in prod.mapping}
    slots = {(f.owner, f.key) for f in facts if isinstance(f, Property)}
    for p in prod.rhs.properties:
        if (p.owner, p.key, p.value) in preserved:
            continue
        owner = image[p.owner]
        if (owner, p.key) in slots:
            raise IdCollisionError(f"{owner}#{p.key}")
        slots.add((owner, p.key))
        facts.add(Property(owner, p.key, _resolve(p.value, assign)))  # type: ignore[arg-type]

    after = KnowledgeBase(facts)
    return after, kb_diff(kb, after)
