import re

import pytest
from hypothesis import given
from hypothesis import strategies as st

from parthenos.graph import (
    DanglingEdgeError,
    Delta,
    DuplicateIdError,
    Edge,
    FactSyntaxError,
    IdCollisionError,
    KnowledgeBase,
    Match,
    OrphanPropertyError,
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

import spo_oracle

# -- fact file ---------------------------------------------------------------

ids = st.from_regex(r"[A-Za-z0-9:._' \\-]{1,10}", fullmatch=True)
atoms = st.from_regex(r"[a-z][a-z0-9_]{0,6}", fullmatch=True)
values = st.one_of(st.booleans(), st.integers(-1000, 1000), st.text(max_size=10).filter(lambda s: "\n" not in s))


@st.composite
def knowledge_bases(draw):
    vids = draw(st.lists(ids, unique=True, max_size=6))
    facts = [Vertex(v, draw(atoms)) for v in vids]
    if vids:
        for i in range(draw(st.integers(0, 6))):
            facts.append(Edge(f"edge{i}", draw(st.sampled_from(vids)), draw(st.sampled_from(vids)), draw(atoms)))
    owners = [f.id for f in facts]
    if owners:
        slots = draw(st.lists(st.tuples(st.sampled_from(owners), atoms), unique=True, max_size=6))
        facts += [Property(o, k, draw(values)) for o, k in slots]
    return KnowledgeBase(facts)


@given(knowledge_bases())
def test_serialize_parse_round_trip(kb):
    text = serialize_kb(kb)
    assert parse_kb(text) == kb
    assert serialize_kb(parse_kb(text)) == text


@given(knowledge_bases())
def test_fact_file_is_prolog_shaped(kb):
    # checked without an interpreter: every clause is functor(term, ...). with quoted atoms
    term = r"(?:'(?:[^'\\\n]|\\x[0-9a-fA-F]+\\|\\[\\'nrt])*'|[a-z][A-Za-z0-9_]*|-?[0-9]+)"
    clause = re.compile(rf"(?:vertex|edge|property)\({term}(?:, ?{term})*\)\.")
    lines = serialize_kb(kb).splitlines()
    assert lines[0].startswith("%")
    for line in lines[1:]:
        assert clause.fullmatch(line), line


def test_serialized_layout():
    kb = KnowledgeBase([
        Vertex("class:B", "class"),
        Vertex("class:A", "class"),
        Edge("e:extends:B", "class:B", "class:A", "extends"),
        Property("class:A", "name", "A"),
        Property("class:A", "abstract", False),
    ])
    assert serialize_kb(kb) == (
        "% parthenos knowledge base v1\n"
        "vertex('class:A', class).\n"
        "vertex('class:B', class).\n"
        "edge('e:extends:B', 'class:B', 'class:A', extends).\n"
        "property('class:A', abstract, false).\n"
        "property('class:A', name, 'A').\n"
    )


def test_bool_and_int_values_stay_distinct():
    a = KnowledgeBase([Vertex("x", "t"), Property("x", "v", True)])
    b = KnowledgeBase([Vertex("x", "t"), Property("x", "v", 1)])
    assert a != b
    assert parse_kb(serialize_kb(a)).prop("x", "v") is True


@pytest.mark.parametrize(
    "facts, error",
    [
        ([Edge("e", "a", "b", "l"), Vertex("a", "t")], DanglingEdgeError),
        ([Vertex("a", "t"), Vertex("a", "u")], DuplicateIdError),
        ([Vertex("a", "t"), Edge("a", "a", "a", "l")], DuplicateIdError),
        ([Property("ghost", "k", 1)], OrphanPropertyError),
        ([Vertex("a", "t"), Property("a", "k", 1), Property("a", "k", 2)], DuplicateIdError),
    ],
)
def test_invariants_enforced(facts, error):
    with pytest.raises(error):
        KnowledgeBase(facts)


@pytest.mark.parametrize("text, line", [
    ("vertex('a', t).\nvertex(a b).\n", 2),
    ("edge('e', 'a').\n", 1),
    ("% c\n\nproperty('a', k, maybe).\n", 3),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(FactSyntaxError) as info:
        parse_kb(text)
    assert info.value.line == line


# -- deltas -------------------------------------------------------------------

@given(knowledge_bases(), knowledge_bases())
def test_diff_then_apply(a, b):
    assert a.apply(kb_diff(a, b)) == b


@given(knowledge_bases(), knowledge_bases(), knowledge_bases())
def test_delta_composition(a, b, c):
    combined = kb_diff(a, b).then(kb_diff(b, c))
    assert a.apply(combined) == c


def test_delta_rejects_overlap():
    v = Vertex("a", "t")
    with pytest.raises(ValueError):
        Delta({v}, {v})


# -- matching -----------------------------------------------------------------

HOST = KnowledgeBase([
    Vertex("c1", "class"), Vertex("c2", "class"), Vertex("a1", "attribute"),
    Edge("h1", "c1", "a1", "has"), Edge("x1", "c2", "c1", "extends"),
    Property("c1", "name", "Book"), Property("c2", "name", "Novel"),
])


def test_match_with_bound_property():
    pattern = PatternGraph([Vertex("?c", "class")], [], [Property("?c", "name", "Book")])
    assert [m.assignment for m in find_matches(pattern, {}, HOST)] == [{"?c": "c1"}]


def test_match_binds_property_variable():
    pattern = PatternGraph(
        [Vertex("?s", "class"), Vertex("?t", "class")],
        [Edge("?e", "?s", "?t", "extends")],
        [Property("?t", "name", "?n")],
    )
    (m,) = find_matches(pattern, {}, HOST)
    assert m["?n"] == "Book" and m["?s"] == "c2"


def test_matches_are_injective_and_sorted():
    pattern = PatternGraph([Vertex("?x", "class"), Vertex("?y", "class")])
    found = [(m["?x"], m["?y"]) for m in find_matches(pattern, {}, HOST)]
    assert found == [("c1", "c2"), ("c2", "c1")]


def test_initial_bindings_restrict_matches():
    pattern = PatternGraph([Vertex("?x", "class")])
    assert [m["?x"] for m in find_matches(pattern, {"?x": "c2"}, HOST)] == ["c2"]


def test_spo_oracle_sample():
    for seed in range(300):
        spo_oracle.check_case(seed)


# -- rewriting -----------------------------------------------------------------

def test_deleting_a_vertex_removes_dangling_edges_and_properties():
    lhs = PatternGraph([Vertex("?c", "class")], [], [Property("?c", "name", "Book")])
    prod = Production("drop", lhs, PatternGraph())
    (m,) = find_matches(lhs, {}, HOST)
    after, delta = apply_spo(prod, m, HOST)
    assert "c1" not in after.vertices
    assert set(after.edges) == set()
    assert after.prop("c1", "name") is None
    assert delta.removed == {HOST.vertices["c1"], HOST.edges["h1"], HOST.edges["x1"], *HOST.props_of("c1")}


def test_creation_expands_placeholders_and_params():
    lhs = PatternGraph([Vertex("?c", "class")], [], [Property("?c", "name", "Book")])
    rhs = PatternGraph(
        [Vertex("?c", "class"), Vertex("attr:{?n}", "attribute")],
        [Edge("has:{?n}", "?c", "attr:{?n}", "has")],
        [Property("?c", "name", "Book"), Property("attr:{?n}", "name", "?n")],
    )
    prod = Production("add", lhs, rhs, {"?c": "?c"}, params=("?n",))
    (m,) = find_matches(lhs, {"?n": "isbn"}, HOST)
    after, delta = apply_spo(prod, m, HOST)
    assert after.edges["has:isbn"] == Edge("has:isbn", "c1", "attr:isbn", "has")
    assert after.prop("attr:isbn", "name") == "isbn"
    assert delta.removed == frozenset()


def test_property_change_through_rewrite():
    lhs = PatternGraph([Vertex("c1", "class")], [], [Property("c1", "name", "Book")])
    rhs = PatternGraph([Vertex("c1", "class")], [], [Property("c1", "name", "Tome")])
    prod = Production("rename", lhs, rhs, {"c1": "c1"})
    after, delta = apply_spo(prod, find_matches(lhs, {}, HOST)[0], HOST)
    assert after.prop("c1", "name") == "Tome"
    assert delta == Delta({Property("c1", "name", "Tome")}, {Property("c1", "name", "Book")})


def test_creation_collision_raises():
    lhs = PatternGraph([Vertex("?c", "class")], [], [Property("?c", "name", "Book")])
    rhs = PatternGraph([Vertex("?c", "class"), Vertex("c2", "class")], [], [Property("?c", "name", "Book")])
    prod = Production("clash", lhs, rhs, {"?c": "?c"})
    with pytest.raises(IdCollisionError):
        apply_spo(prod, find_matches(lhs, {}, HOST)[0], HOST)


def test_production_validation():
    lhs = PatternGraph([Vertex("?c", "class")])
    with pytest.raises(ValueError, match="label"):
        Production("bad", lhs, PatternGraph([Vertex("?c", "attribute")]), {"?c": "?c"})
    with pytest.raises(ValueError, match="never bound"):
        Production("bad", lhs, PatternGraph([Vertex("x:{?zz}", "class")]))


def test_unrelated_rewrites_commute():
    kb = HOST
    drop_attr = Production("a", PatternGraph([Vertex("a1", "attribute")]), PatternGraph())
    add_type = Production("b", PatternGraph(), PatternGraph([Vertex("t:int", "type")]))
    one, _ = apply_spo(drop_attr, Match({"a1": "a1"}), kb)
    one, _ = apply_spo(add_type, Match({}), one)
    two, _ = apply_spo(add_type, Match({}), kb)
    two, _ = apply_spo(drop_attr, Match({"a1": "a1"}), two)
    assert one == two
