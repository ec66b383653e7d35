"""Static site scaffolding from the panel and field facts of a knowledge base.

Each visible panel becomes a ``<section>`` holding a form with one input per
visible field. The forms do nothing; ``app.js`` only blocks submission.
"""
from __future__ import annotations

import html
import os
from dataclasses import dataclass
from pathlib import Path
from string import Template

from . import schema as S
from .graph import KnowledgeBase

__all__ = ["FieldView", "PanelView", "collect_panels", "generate_site", "render_index", "render_panel"]

SITE_FILES = ("index.html", "style.css", "app.js")

_INPUT_KIND = {"int": "number", "double": "number", "boolean": "checkbox", "String": "text"}

_INDEX = Template(
    """<!DOCTYPE html>
<html lang="en">
<head>
  <meta charset="utf-8">
  <title>$title</title>
  <link rel="stylesheet" href="style.css">
</head>
<body>
  <main>
$panels  </main>
  <script src="app.js"></script>
</body>
</html>
"""
)

_STYLE = """body {
  font-family: sans-serif;
  margin: 0;
  background: #f4f4f4;
}

main {
  display: flex;
  flex-wrap: wrap;
  gap: 1rem;
  padding: 1rem;
}

section.panel {
  background: #fff;
  border: 1px solid #ccc;
  border-radius: 4px;
  padding: 0.5rem 1rem 1rem;
  min-width: 16rem;
}

section.panel h2 {
  font-size: 1.1rem;
  border-bottom: 1px solid #ddd;
}

.field {
  display: flex;
  justify-content: space-between;
  margin: 0.4rem 0;
}
"""

_APP = """// Panels are rendered statically; forms have no behaviour.
document.querySelectorAll("section.panel form").forEach(function (form) {
  form.addEventListener("submit", function (event) {
    event.preventDefault();
  });
});
"""


@dataclass(frozen=True)
class PanelView:
    id: str
    cls: str
    label: str
    position: int
    visible: bool


@dataclass(frozen=True)
class FieldView:
    id: str
    cls: str
    name: str
    label: str
    position: int
    visible: bool
    input_kind: str


def _field_view(kb: KnowledgeBase, fid: str) -> FieldView:
    cls, _, attr = S.split_id(fid)[1].partition(".")
    reflects = kb.out_edges(fid, "reflects")
    kind = "text"
    if reflects:
        typed = kb.out_edges(reflects[0].dst, "has_type")
        if typed and S.split_id(typed[0].dst)[0] == "type":
            kind = _INPUT_KIND.get(S.type_name_of(typed[0].dst), "text")
    return FieldView(
        fid,
        cls,
        attr,
        str(kb.prop(fid, "label", attr)),
        int(kb.prop(fid, "position", 0)),  # type: ignore[arg-type]
        kb.prop(fid, "visible", True) is True,
        kind,
    )


def collect_panels(kb: KnowledgeBase) -> list[tuple[PanelView, list[FieldView]]]:
    """Panels and their fields, both in position order."""
    out = []
    for v in kb.by_label("panel"):
        cls = S.type_name_of(v.id)
        panel = PanelView(
            v.id,
            cls,
            str(kb.prop(v.id, "label", cls)),
            int(kb.prop(v.id, "position", 0)),  # type: ignore[arg-type]
            kb.prop(v.id, "visible", True) is True,
        )
        fields = [_field_view(kb, e.dst) for e in kb.out_edges(v.id, "has_field")]
        fields.sort(key=lambda f: (f.position, f.id))
        out.append((panel, fields))
    out.sort(key=lambda pf: (pf[0].position, pf[0].id))
    return out


def render_panel(panel: PanelView, fields: list[FieldView]) -> str:
    if not panel.visible:
        return ""
    esc = html.escape
    lines = [
        f'    <section class="panel" id="panel-{esc(panel.cls)}" data-position="{panel.position}">',
        f"      <h2>{esc(panel.label)}</h2>",
        "      <form>",
    ]
    for f in sorted(fields, key=lambda f: (f.position, f.id)):
        if not f.visible:
            continue
        input_id = esc(f"{f.cls}-{f.name}")
        extra = ' step="any"' if f.input_kind == "number" else ""
        lines += [
            '        <div class="field">',
            f'          <label for="{input_id}">{esc(f.label)}</label>',
            f'          <input type="{f.input_kind}" id="{input_id}" name="{esc(f.name)}"{extra}>',
            "        </div>",
        ]
    lines += ["      </form>", "    </section>"]
    return "\n".join(lines) + "\n"


def render_index(kb: KnowledgeBase, title: str = "Panels") -> str:
    panels = "".join(render_panel(p, fs) for p, fs in collect_panels(kb))
    return _INDEX.substitute(title=html.escape(title), panels=panels)


def generate_site(kb: KnowledgeBase, out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    contents = {"index.html": render_index(kb), "style.css": _STYLE, "app.js": _APP}
    written = []
    for name in SITE_FILES:
        path = out / name
        path.write_text(contents[name], encoding="utf-8", newline="\n")
        written.append(path)
    return written
