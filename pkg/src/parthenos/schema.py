"""Vertex/edge vocabulary and the deterministic id scheme of the class model."""
from __future__ import annotations

from .dialect import BUILTIN_TYPES

VERTEX_LABELS = ("class", "attribute", "method", "type", "panel", "field")
EDGE_LABELS = (
    "has_attribute",
    "has_method",
    "has_type",
    "returns",
    "extends",
    "represents",
    "reflects",
    "has_field",
)
PROPERTY_KEYS = ("name", "source_file", "label", "position", "visible", "generated")
UI_KEYS = ("label", "position", "visible")

PANEL_ANNOTATION = "Panel"
FIELD_ANNOTATION = "UiField"


def class_id(name: str) -> str:
    return f"class:{name}"


def attr_id(cls: str, attr: str) -> str:
    return f"attr:{cls}.{attr}"


def method_id(cls: str, method: str) -> str:
    return f"method:{cls}.{method}"


def type_id(name: str) -> str:
    return f"type:{name}"


def panel_id(cls: str) -> str:
    return f"panel:{cls}"


def field_id(cls: str, attr: str) -> str:
    return f"field:{cls}.{attr}"


def edge_id(label: str, qualified: str) -> str:
    return f"e:{label}:{qualified}"


def type_target(type_name: str) -> str:
    """Vertex id an attribute or return type points at."""
    return type_id(type_name) if type_name in BUILTIN_TYPES else class_id(type_name)


def split_id(vertex_id: str) -> tuple[str, str]:
    kind, _, qualified = vertex_id.partition(":")
    return kind, qualified


def type_name_of(vertex_id: str) -> str:
    return split_id(vertex_id)[1]


def source_file_for(cls: str) -> str:
    return f"{cls}.pss"


def accessor_names(attr: str) -> tuple[str, str]:
    cap = attr[:1].upper() + attr[1:]
    return f"get{cap}", f"set{cap}"


def getter_body(attr: str) -> str:
    return f"return this.{attr};"


def setter_body(attr: str) -> str:
    return f"this.{attr} = value;"


SETTER_PARAM = "value"
