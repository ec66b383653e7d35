import os

import pytest

from parthenos.dialect import parse_unit, print_unit
from parthenos.extraction import extract_sources
from parthenos.graph import Delta, Edge, Property, Vertex
from parthenos.injection import (
    AnchorNotFound,
    InjectionError,
    InjectionModel,
    SourceWriteError,
    UnmappableDelta,
    apply_models,
    inject_ast,
    locate_injection_point,
    plan_injection,
    typecheck_delta,
    write_sources,
)
from parthenos.transformation import add_attribute, create_class, ui_create_element, ui_remove_element

from conftest import snapshot

SOURCES = {
    "Book.pss": "@Panel(position=1)\nclass Book {\n    @UiField String title;\n    int pages;\n    void read() {\n    }\n}\n",
    "Novel.pss": "class Novel extends Book {\n}\n",
}
KB = extract_sources(SOURCES)


# -- type checking --------------------------------------------------------------

def test_clean_delta_has_no_violations():
    assert typecheck_delta(KB, add_attribute(KB, "Novel", "genre", "String").delta) == []


@pytest.mark.parametrize(
    "added, code",
    [
        ({Edge("e:extends:Book", "class:Book", "class:Novel", "extends")}, "InheritanceCycle"),
        ({Edge("e:extends:Book", "class:Book", "type:int", "extends")}, "SuperclassNotFound"),
        ({Vertex("attr:Novel.title", "attribute"),
          Edge("e:has_attribute:Novel.title", "class:Novel", "attr:Novel.title", "has_attribute"),
          Edge("e:has_type:Novel.title", "attr:Novel.title", "type:String", "has_type")}, "DuplicateAttribute"),
        ({Vertex("attr:Novel.x", "attribute"),
          Edge("e:has_type:Novel.x", "attr:Novel.x", "type:void", "has_type")}, "TypeNotFound"),
        ({Property("panel:Book", "visible", "yes")}, "BadValueType"),
    ],
)
def test_violations(added, code):
    removed = {p for p in KB.facts if isinstance(p, Property) and (p.owner, p.key) in {(a.owner, a.key) for a in added if isinstance(a, Property)}}
    violations = typecheck_delta(KB, Delta(added, removed))
    assert [v.code for v in violations] == [code]


def test_violation_str():
    (v,) = typecheck_delta(KB, Delta({Edge("e:extends:Book", "class:Book", "class:Novel", "extends")}))
    assert str(v) == "InheritanceCycle: Book"


# -- planning --------------------------------------------------------------------

def test_plan_create_class():
    (m,) = plan_injection(create_class(KB, "Poem", "Book").delta, KB)
    assert m == InjectionModel("add_class", None, {"name": "Poem", "superclass": "Book"})
    assert m.file == "Poem.pss"


def test_plan_add_attribute():
    models = plan_injection(add_attribute(KB, "Book", "isbn", "String").delta, KB)
    assert [m.to_json() for m in models] == [
        {"injection": "add_field", "target_file": "Book.pss", "params": {"name": "isbn", "type": "String"}},
        {"injection": "add_methods", "target_file": "Book.pss", "params": {"attribute": "isbn", "type": "String"}},
    ]


def test_plan_field_creation_and_property_edit():
    out = ui_create_element(KB, "field", ("Book", "pages"), label="Pages", position=1)
    models = plan_injection(out.delta, KB)
    assert InjectionModel(
        "set_annotation", "Book.pss",
        {"annotation": "UiField", "member": "pages", "args": {"label": "Pages", "position": 1, "visible": True}},
    ) in models
    # the existing field moves to position 2
    assert InjectionModel(
        "set_annotation", "Book.pss", {"annotation": "UiField", "member": "title", "key": "position", "value": 2}
    ) in models


def test_plan_removal():
    models = plan_injection(ui_remove_element(KB, "panel", "Book").delta, KB)
    assert {(m.injection, m.params["member"]) for m in models} == {("remove_annotation", None), ("remove_annotation", "title")}


def test_unmappable_delta():
    with pytest.raises(UnmappableDelta):
        plan_injection(Delta({Vertex("method:Book.extra", "method")}), KB)
    with pytest.raises(UnmappableDelta):
        plan_injection(Delta(removed={KB.vertices["attr:Book.pages"]}), KB)


def test_injection_model_json_round_trip():
    m = InjectionModel("set_annotation", "Book.pss", {"annotation": "Panel", "member": None, "key": "label", "value": "B"})
    assert InjectionModel.from_json(m.to_json()) == m
    with pytest.raises(ValueError):
        InjectionModel.from_json({"injection": "rename"})


# -- anchoring and editing ---------------------------------------------------------

BOOK = parse_unit(SOURCES["Book.pss"], "Book.pss")


@pytest.mark.parametrize(
    "model, anchor, index",
    [
        (InjectionModel("add_field", "Book.pss", {"name": "isbn", "type": "String"}), "after-last-field", 2),
        (InjectionModel("add_methods", "Book.pss", {"attribute": "isbn", "type": "String"}), "end-of-class-body", 3),
        (InjectionModel("set_annotation", "Book.pss", {"annotation": "Panel", "member": None, "key": "label", "value": "B"}),
         "annotation-slot-of(Book)", -1),
        (InjectionModel("set_annotation", "Book.pss", {"annotation": "UiField", "member": "pages", "args": {}}),
         "annotation-slot-of(pages)", 1),
    ],
)
def test_anchors(model, anchor, index):
    point = locate_injection_point(BOOK, model)
    assert (point.anchor, point.index) == (anchor, index)


@pytest.mark.parametrize(
    "model, error",
    [
        (InjectionModel("add_field", "Book.pss", {"name": "title", "type": "String"}), InjectionError),
        (InjectionModel("set_annotation", "Book.pss", {"annotation": "UiField", "member": "read", "key": "label", "value": "x"}), AnchorNotFound),
        (InjectionModel("remove_annotation", "Book.pss", {"annotation": "UiField", "member": "pages"}), AnchorNotFound),
        (InjectionModel("set_annotation", "Book.pss", {"annotation": "Panel", "member": None, "args": {}}), InjectionError),
    ],
)
def test_anchor_errors(model, error):
    with pytest.raises(error):
        locate_injection_point(BOOK, model)


def test_add_field_goes_after_last_field_and_accessors_at_end():
    unit = inject_ast(BOOK, InjectionModel("add_field", "Book.pss", {"name": "isbn", "type": "String"}))
    unit = inject_ast(unit, InjectionModel("add_methods", "Book.pss", {"attribute": "isbn", "type": "String"}))
    assert [m.name for m in unit.class_decl.members] == ["title", "pages", "isbn", "read", "getIsbn", "setIsbn"]
    text = print_unit(unit)
    assert "    String getIsbn() {\n        return this.isbn;\n    }" in text
    assert "    void setIsbn(String value) {\n        this.isbn = value;\n    }" in text


def test_set_annotation_edits_in_place():
    unit = inject_ast(BOOK, InjectionModel("set_annotation", "Book.pss", {"annotation": "Panel", "member": None, "key": "label", "value": "Books"}))
    assert print_unit(unit).startswith('@Panel(position=1, label="Books")\nclass Book {')


def test_apply_models_reports_changed_files_only():
    models = [InjectionModel("add_class", None, {"name": "Poem", "superclass": None})]
    assert apply_models(SOURCES, models) == {"Poem.pss": "class Poem {\n}\n"}
    noop = InjectionModel("set_annotation", "Book.pss", {"annotation": "Panel", "member": None, "key": "position", "value": 1})
    canonical = {"Book.pss": print_unit(BOOK)}
    assert apply_models(canonical, [noop]) == {}


# -- writing ------------------------------------------------------------------------

def seed(tmp_path):
    for rel, text in SOURCES.items():
        (tmp_path / rel).write_text(text)
    return snapshot(tmp_path)


def test_write_sources_creates_and_replaces(tmp_path):
    seed(tmp_path)
    write_sources(tmp_path, [("Book.pss", "class Book {\n}\n"), ("sub/Poem.pss", "class Poem {\n}\n")])
    assert (tmp_path / "Book.pss").read_text() == "class Book {\n}\n"
    assert (tmp_path / "sub" / "Poem.pss").exists()
    assert not [p for p in tmp_path.rglob("*.tmp")]


def test_unparsable_source_is_refused(tmp_path):
    before = seed(tmp_path)
    with pytest.raises(InjectionError, match="unparsable"):
        write_sources(tmp_path, [("Book.pss", "class Book {"), ("Novel.pss", "class Novel {}")])
    assert snapshot(tmp_path) == before


@pytest.mark.parametrize("fail_on", [1, 2, 3])
def test_failed_rename_rolls_back(tmp_path, monkeypatch, fail_on):
    before = seed(tmp_path)
    real_replace = os.replace
    calls = []

    def flaky(src, dst):
        calls.append(dst)
        if len(calls) == fail_on:
            raise OSError("disk full")
        real_replace(src, dst)

    monkeypatch.setattr(os, "replace", flaky)
    edits = [("Book.pss", "class Book {\n}\n"), ("Novel.pss", "class Novel {\n}\n"), ("new/Poem.pss", "class Poem {\n}\n")]
    with pytest.raises(SourceWriteError) as info:
        write_sources(tmp_path, edits)
    assert snapshot(tmp_path) == before
    assert not (tmp_path / "new").exists()
    assert len(info.value.rollback) == fail_on - 1
