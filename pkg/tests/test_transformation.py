import json
import os
import re
import threading

import pytest

from parthenos.extraction import extract_model, extract_sources
from parthenos.graph import Property, Vertex, parse_kb, serialize_kb
from parthenos.injection import InjectionError
from parthenos.transformation import (
    LOCK_NAME,
    RepoLockedError,
    RequestError,
    TransformationRequest,
    add_attribute,
    apply_transformation,
    create_class,
    dispatch,
    repo_lock,
    ui_create_element,
    ui_remove_element,
    ui_set_property,
)

from conftest import FIXTURES, snapshot

BASE = extract_sources({
    "Book.pss": "class Book { String title; }",
    "Novel.pss": "class Novel extends Book { int pages; }",
})


def positions(kb, label):
    return {v.id: kb.prop(v.id, "position") for v in kb.by_label(label)}


def test_create_class_with_superclass():
    out = create_class(BASE, "Poem", "Book")
    assert out.applied
    assert out.kb_after.prop("class:Poem", "source_file") == "Poem.pss"
    assert out.kb_after.edges["e:extends:Poem"].dst == "class:Book"
    assert out.delta.removed == frozenset()
    assert out.production is not None and out.production.name == "create_class"


@pytest.mark.parametrize(
    "args, reason",
    [
        (("Book",), "DuplicateClass: Book"),
        (("Poem", "Verse"), "SuperclassNotFound: Verse"),
        (("9lives",), "InvalidName: class name '9lives'"),
        (("String",), "InvalidName: class name 'String'"),
    ],
)
def test_create_class_rejections(args, reason):
    out = create_class(BASE, *args)
    assert out.status == "rejected"
    assert out.reason == reason
    assert out.kb_after is BASE
    assert not out.delta


def test_add_attribute_creates_accessors():
    out = add_attribute(BASE, "Book", "isbn", "String")
    kb = out.kb_after
    assert kb.edges["e:has_type:Book.isbn"].dst == "type:String"
    for m in ("getIsbn", "setIsbn"):
        assert kb.prop(f"method:Book.{m}", "generated") is True
    assert kb.edges["e:returns:Book.getIsbn"].dst == "type:String"
    assert kb.edges["e:returns:Book.setIsbn"].dst == "type:void"


def test_add_attribute_of_class_type():
    out = add_attribute(BASE, "Novel", "sequel", "Novel")
    assert out.kb_after.edges["e:has_type:Novel.sequel"].dst == "class:Novel"


@pytest.mark.parametrize(
    "args, code",
    [
        (("Poem", "x", "int"), "ClassNotFound"),
        (("Book", "x", "void"), "TypeNotFound"),
        (("Book", "x", "Widget"), "TypeNotFound"),
        (("Novel", "title", "String"), "DuplicateAttribute"),
        (("Book", "title", "int"), "DuplicateAttribute"),
        (("Book", "class", "int"), "InvalidName"),
    ],
)
def test_add_attribute_rejections(args, code):
    out = add_attribute(BASE, *args)
    assert out.code == code


def test_accessor_name_clash_rejected():
    kb = extract_sources({"A.pss": "class A { int getX() { return 1; } }"})
    assert add_attribute(kb, "A", "x", "int").code == "DuplicateMember"


def ui_base():
    kb = create_class(BASE, "Poem").kb_after
    for cls in ("Book", "Novel"):
        kb = ui_create_element(kb, "panel", cls).kb_after
    return kb


def test_panels_get_next_position_and_defaults():
    kb = ui_base()
    assert positions(kb, "panel") == {"panel:Book": 1, "panel:Novel": 2}
    assert kb.prop("panel:Book", "label") == "Book"
    assert kb.prop("panel:Book", "visible") is True


def test_panel_inserted_mid_list_shifts_others():
    kb = ui_create_element(ui_base(), "panel", "Poem", position=1, label="Poems").kb_after
    assert positions(kb, "panel") == {"panel:Poem": 1, "panel:Book": 2, "panel:Novel": 3}


def test_field_creation_and_reorder():
    kb = add_attribute(ui_base(), "Book", "isbn", "String").kb_after
    kb = ui_create_element(kb, "field", ("Book", "title")).kb_after
    kb = ui_create_element(kb, "field", ("Book", "isbn"), position=1).kb_after
    assert positions(kb, "field") == {"field:Book.isbn": 1, "field:Book.title": 2}
    kb = ui_set_property(kb, "field", ("Book", "isbn"), "position", 2).kb_after
    assert positions(kb, "field") == {"field:Book.isbn": 2, "field:Book.title": 1}


@pytest.mark.parametrize(
    "kind, target, extra, code",
    [
        ("panel", "Ghost", {}, "TargetNotFound"),
        ("panel", "Book", {}, "DuplicateElement"),
        ("panel", "Poem", {"position": 9}, "BadValueType"),
        ("panel", "Poem", {"label": 3}, "BadValueType"),
        ("field", ("Poem", "title"), {}, "TargetNotFound"),
        ("field", ("Novel", "title"), {}, "TargetNotFound"),
        ("field", ("Book", "title"), {"visible": "yes"}, "BadValueType"),
    ],
)
def test_ui_create_rejections(kind, target, extra, code):
    assert ui_create_element(ui_base(), kind, target, **extra).code == code


def test_field_needs_panel():
    kb = add_attribute(ui_base(), "Poem", "line", "String").kb_after
    assert ui_create_element(kb, "field", ("Poem", "line")).code == "PanelMissing"


def test_remove_panel_cascades_and_renumbers():
    kb = ui_create_element(ui_base(), "field", ("Book", "title")).kb_after
    out = ui_remove_element(kb, "panel", "Book")
    assert out.applied
    after = out.kb_after
    assert "panel:Book" not in after.vertices and "field:Book.title" not in after.vertices
    assert positions(after, "panel") == {"panel:Novel": 1}
    assert ui_remove_element(after, "panel", "Book").code == "TargetNotFound"


def test_set_label_and_visibility():
    kb = ui_set_property(ui_base(), "panel", "Book", "label", "Books").kb_after
    kb = ui_set_property(kb, "panel", "Book", "visible", False).kb_after
    assert kb.prop("panel:Book", "label") == "Books"
    assert kb.prop("panel:Book", "visible") is False
    assert ui_set_property(kb, "panel", "Book", "visible", 0).code == "BadValueType"
    assert ui_set_property(kb, "panel", "Book", "position", 3).code == "BadValueType"


def test_positions_stay_a_permutation():
    kb = ui_create_element(ui_base(), "panel", "Poem").kb_after
    for target, pos in (("Poem", 1), ("Book", 3), ("Novel", 2), ("Poem", 3)):
        kb = ui_set_property(kb, "panel", target, "position", pos).kb_after
        assert sorted(positions(kb, "panel").values()) == [1, 2, 3]
    assert kb.prop("panel:Poem", "position") == 3


def test_request_validation():
    with pytest.raises(RequestError, match="unknown operation"):
        TransformationRequest("rename_class", {})
    with pytest.raises(RequestError, match="missing"):
        TransformationRequest("add_attribute", {"class": "A"})
    with pytest.raises(RequestError, match="unexpected"):
        TransformationRequest("create_class", {"name": "A", "color": "red"})
    req = TransformationRequest.from_json({"op": "create_class", "params": {"name": "A"}})
    assert TransformationRequest.from_json(json.loads(json.dumps(req.to_json()))) == req


def test_dispatch_routes_set_requests():
    kb = ui_base()
    req = TransformationRequest("set_label", {"kind": "panel", "class": "Novel", "value": "Novels"})
    assert dispatch(kb, req).kb_after.prop("panel:Novel", "label") == "Novels"


# -- orchestration -------------------------------------------------------------

def test_apply_writes_sources_and_model(copy_repo, tmp_path):
    repo = copy_repo("library")
    kb_path = tmp_path / "model.pl"
    kb = extract_model(repo)
    out = apply_transformation(kb, repo, TransformationRequest("add_attribute", {"class": "Book", "name": "isbn", "type": "String"}), kb_path)
    assert out.applied and out.written == ("Book.pss",)
    text = (repo / "Book.pss").read_text()
    assert "String isbn;" in text and "void setIsbn(String value) {" in text
    assert parse_kb(kb_path.read_text()) == out.kb_after == extract_model(repo)
    assert not (repo / LOCK_NAME).exists()


def test_rejected_request_writes_nothing(copy_repo, tmp_path):
    repo = copy_repo("library")
    before = snapshot(repo)
    out = apply_transformation(extract_model(repo), repo, TransformationRequest("create_class", {"name": "Book"}), tmp_path / "m.pl")
    assert out.code == "DuplicateClass"
    assert snapshot(repo) == before
    assert not (tmp_path / "m.pl").exists()


def test_stale_model_fails_sync_check(copy_repo):
    repo = copy_repo("library")
    kb = extract_model(repo).with_facts([Vertex("class:Ghost", "class"), Property("class:Ghost", "name", "Ghost")])
    before = snapshot(repo)
    with pytest.raises(InjectionError, match="out of sync"):
        apply_transformation(kb, repo, TransformationRequest("create_class", {"name": "Shelf"}))
    assert snapshot(repo) == before


def test_lock_is_exclusive(copy_repo):
    repo = copy_repo("library")
    with repo_lock(repo):
        with pytest.raises(RepoLockedError):
            apply_transformation(extract_model(repo), repo, TransformationRequest("create_class", {"name": "Shelf"}))
    assert not (repo / LOCK_NAME).exists()


def test_concurrent_appliers_one_wins(copy_repo):
    repo = copy_repo("library")
    kb = extract_model(repo)
    results, barrier = [], threading.Barrier(4)

    def worker(i):
        barrier.wait()
        try:
            results.append(apply_transformation(kb, repo, TransformationRequest("create_class", {"name": f"C{i}"})).status)
        except RepoLockedError:
            results.append("locked")

    threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    created = [p for p in os.listdir(repo) if re.fullmatch(r"C\d\.pss", p)]
    assert results.count("applied") == len(created) >= 1
    assert sum(bool(re.fullmatch(r"class:C\d", v)) for v in extract_model(repo).vertices) == len(created)


def test_missing_repo_reported(tmp_path):
    with pytest.raises(FileNotFoundError):
        apply_transformation(extract_sources({}), tmp_path / "nope", TransformationRequest("create_class", {"name": "A"}))
