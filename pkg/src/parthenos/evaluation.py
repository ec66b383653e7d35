"""Scenario evaluation: metric element sets, precision/recall/F, and scenario tables.

Every metric is an element set (class names, qualified attribute names, fact
lines, ...) rather than a bare count, so two models with equal counts but
different elements do not score as identical.
"""
from __future__ import annotations

import json
import math
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from . import schema as S
from .dialect import BUILTIN_TYPES, SourceUnit, list_classes, read_unit
from .extraction import extract_model
from .graph import Delta, KnowledgeBase, serialize_kb
from .transformation import TransformationRequest, apply_transformation

__all__ = [
    "CATEGORIES",
    "MetricsReport",
    "ScenarioError",
    "ScenarioSpec",
    "ScenarioTable",
    "compute_metrics",
    "load_scenario",
    "run_scenario",
    "score",
    "semantic_classes",
    "truncate2",
]

CATEGORIES = ("Classes", "Attributes", "Panels", "Fields", "Syntax", "Semantics", "KB")


class ScenarioError(Exception):
    def __init__(self, message: str, table: ScenarioTable | None = None):
        super().__init__(message)
        self.table = table


def truncate2(x: float) -> float:
    """Cut to two decimals without rounding: 0.947 becomes 0.94."""
    return math.floor(x * 100 + 1e-9) / 100


def raw_score(obtained: set, expected: set) -> tuple[float, float, float]:
    hits = len(set(obtained) & set(expected))
    precision = hits / len(obtained) if obtained else 1.0
    recall = hits / len(expected) if expected else 1.0
    f = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f


def score(obtained: set, expected: set) -> tuple[float, float, float]:
    """Precision, recall and F-measure of ``obtained`` against ``expected``, at 2 decimals."""
    return tuple(truncate2(x) for x in raw_score(obtained, expected))  # type: ignore[return-value]


@dataclass(frozen=True)
class MetricsReport:
    sets: Mapping[str, frozenset[str]]

    def __getitem__(self, category: str) -> frozenset[str]:
        return self.sets[category]

    def count(self, category: str) -> int:
        return len(self.sets[category])

    def counts(self) -> dict[str, int]:
        return {c: self.count(c) for c in CATEGORIES}


def _type_ok(type_name: str, classes: set[str], allow_void: bool = False) -> bool:
    if type_name == "void":
        return allow_void
    return type_name in BUILTIN_TYPES or type_name in classes


def semantic_classes(units: Mapping[str, SourceUnit]) -> set[str]:
    """Names of classes whose inheritance, member types and accessors are consistent."""
    classes = set(units)
    ok = set()
    for name, unit in units.items():
        decl = unit.class_decl
        chain, seen, broken = [], {name}, False
        sup = decl.superclass
        while sup is not None:
            if sup not in classes or sup in seen:
                broken = True
                break
            seen.add(sup)
            chain.append(sup)
            sup = units[sup].class_decl.superclass
        if broken:
            continue
        inherited = {f.name for s in chain for f in units[s].class_decl.fields}
        fields = {f.name: f for f in decl.fields}
        if any(f in inherited for f in fields):
            continue
        if not all(_type_ok(f.type_ref, classes) for f in decl.fields):
            continue
        if not all(
            _type_ok(m.return_type, classes, allow_void=True) and all(_type_ok(p.type_ref, classes) for p in m.params)
            for m in decl.methods
        ):
            continue
        accessor_names = {n: attr for attr in fields for n in S.accessor_names(attr)}
        bad_accessor = False
        for m in decl.methods:
            attr = accessor_names.get(m.name)
            if attr is None:
                continue
            f = fields[attr]
            getter, _ = S.accessor_names(attr)
            if m.name == getter:
                consistent = m.params == () and m.return_type == f.type_ref
            else:
                consistent = len(m.params) == 1 and m.params[0].type_ref == f.type_ref and m.return_type == "void"
            bad_accessor |= not consistent
        if not bad_accessor:
            ok.add(name)
    return ok


def compute_metrics(repo: str | os.PathLike, kb: KnowledgeBase) -> MetricsReport:
    listing = list_classes(repo)
    units = {}
    for entry in listing:
        if entry.status == "ok":
            unit = read_unit(repo, entry.path)
            units[unit.name] = unit
    kb_lines = serialize_kb(kb).splitlines()[1:]
    sets = {
        "Classes": frozenset(e.name for e in listing),
        "Attributes": frozenset(f"{n}.{f.name}" for n, u in units.items() for f in u.class_decl.fields),
        "Panels": frozenset(S.type_name_of(v.id) for v in kb.by_label("panel")),
        "Fields": frozenset(S.type_name_of(v.id) for v in kb.by_label("field")),
        "Syntax": frozenset(units),
        "Semantics": frozenset(semantic_classes(units)),
        "KB": frozenset(kb_lines),
    }
    return MetricsReport(sets)


# ---------------------------------------------------------------------------
# scenarios


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    start_repo: Path
    expected_repo: Path
    requests: tuple[TransformationRequest, ...]
    expect_applied: tuple[bool, ...]


def load_scenario(path: str | os.PathLike) -> ScenarioSpec:
    """Read a scenario JSON file; repo paths are relative to the file."""
    path = Path(path)
    data = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    reqs = [TransformationRequest.from_json(r) for r in data.get("requests", [])]
    expect = [bool(r.get("expect_applied", True)) for r in data.get("requests", [])]
    return ScenarioSpec(
        data["name"],
        (base / data["start_repo"]).resolve(),
        (base / data["expected_repo"]).resolve(),
        tuple(reqs),
        tuple(expect),
    )


@dataclass(frozen=True)
class StepResult:
    op: str
    status: str
    expected: bool
    reason: str | None
    in_sync: bool
    written: tuple[str, ...] = ()


@dataclass(frozen=True)
class Row:
    metric: str
    m_a: int
    m_b: int
    m_ab: int
    m_c: int
    precision: float
    recall: float
    f_measure: float
    applied_delta: int


@dataclass
class ScenarioTable:
    name: str
    rows: list[Row]
    average_f: float
    steps: list[StepResult] = field(default_factory=list)
    seconds: float = 0.0

    def row(self, metric: str) -> Row:
        return next(r for r in self.rows if r.metric == metric)

    @property
    def expectations_met(self) -> bool:
        return all((s.status == "applied") == s.expected for s in self.steps)

    def to_json(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "rows": [r.__dict__ for r in self.rows],
            "average_f": self.average_f,
            "steps": [{**s.__dict__, "written": list(s.written)} for s in self.steps],
            "seconds": round(self.seconds, 3),
        }

    def to_text(self) -> str:
        head = ("Metrics", "M_A", "M_B", "M_AB", "M_C", "Precision", "Recall", "F-measure")
        body = [
            (r.metric, r.m_a, r.m_b, r.m_ab, r.m_c, f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f_measure:.2f}")
            for r in self.rows
        ]
        cells = [tuple(str(c) for c in head)] + [tuple(str(c) for c in row) for row in body]
        widths = [max(len(r[i]) for r in cells) for i in range(len(head))]

        def fmt(row):
            first = row[0].ljust(widths[0])
            rest = [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
            return " | ".join([first, *rest])

        lines = [f"Scenario: {self.name}", fmt(cells[0]), "-+-".join("-" * w for w in widths)]
        lines += [fmt(r) for r in cells[1:]]
        avg = f"Average: {self.average_f:.2f}"
        lines.append(avg.rjust(len(lines[1])))
        for i, s in enumerate(self.steps, 1):
            mark = "ok" if (s.status == "applied") == s.expected else "UNEXPECTED"
            why = f" ({s.reason})" if s.reason else ""
            lines.append(f"  step {i}: {s.op} -> {s.status}{why} [{mark}]")
        return "\n".join(lines) + "\n"


def _delta_counts(delta: Delta, files: set[str]) -> dict[str, int]:
    added_vertices = [f for f in delta.added if hasattr(f, "label") and not hasattr(f, "src")]
    by_label = {lbl: sum(1 for v in added_vertices if v.label == lbl) for lbl in ("class", "attribute", "panel", "field")}
    return {
        "Classes": by_label["class"],
        "Attributes": by_label["attribute"],
        "Panels": by_label["panel"],
        "Fields": by_label["field"],
        "Syntax": len(files),
        "Semantics": len(files),
        "KB": len(delta.added) + len(delta.removed),
    }


def run_scenario(spec: ScenarioSpec, workdir: str | os.PathLike | None = None) -> ScenarioTable:
    """Run a scenario on a private copy of its start repository.

    Raises :class:`ScenarioError` (with the table attached) when a request is
    applied or rejected contrary to the scenario's expectation.
    """
    started = time.perf_counter()
    with tempfile.TemporaryDirectory(prefix="parthenos-") as tmp:
        root = Path(workdir) if workdir is not None else Path(tmp)
        work = root / "repo"
        if work.exists():
            shutil.rmtree(work)
        shutil.copytree(spec.start_repo, work)
        kb_path = root / "model.pl"

        kb = extract_model(work)
        kb_path.write_text(serialize_kb(kb), encoding="utf-8", newline="\n")
        m_a = compute_metrics(work, kb)

        steps = []
        total = Delta()
        touched: set[str] = set()
        for req, expected in zip(spec.requests, spec.expect_applied):
            outcome = apply_transformation(kb, work, req, kb_path)
            kb = outcome.kb_after
            total = total.then(outcome.delta)
            touched.update(outcome.written)
            in_sync = serialize_kb(extract_model(work)) == serialize_kb(kb)
            steps.append(StepResult(req.op, outcome.status, expected, outcome.reason, in_sync, outcome.written))
        m_c = compute_metrics(work, kb)

    m_ab = compute_metrics(spec.expected_repo, extract_model(spec.expected_repo))
    applied = _delta_counts(total, touched)
    rows = []
    for cat in CATEGORIES:
        p, r, f = score(m_c[cat], m_ab[cat])
        rows.append(
            Row(cat, m_a.count(cat), len(m_ab[cat] - m_a[cat]), m_ab.count(cat), m_c.count(cat), p, r, f, applied[cat])
        )
    average = truncate2(sum(r.f_measure for r in rows) / len(rows))
    table = ScenarioTable(spec.name, rows, average, steps, time.perf_counter() - started)
    if not table.expectations_met:
        bad = [f"{s.op} was {s.status}" for s in steps if (s.status == "applied") != s.expected]
        raise ScenarioError(f"{spec.name}: unexpected outcome(s): {', '.join(bad)}", table)
    return table
