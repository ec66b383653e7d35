"""Bar charts of scenario scores, rendered straight to image files."""
from __future__ import annotations

import os
from pathlib import Path

from matplotlib.figure import Figure

from .evaluation import ScenarioTable

__all__ = ["plot_scenario"]


def plot_scenario(table: ScenarioTable, path: str | os.PathLike) -> Path:
    """Write a two-panel PNG: element counts and P/R/F per metric row.

    The KB row is left out of the count panel since it dwarfs the others.
    """
    metrics = [r.metric for r in table.rows]
    fig = Figure(figsize=(11, 4), layout="constrained")
    counts, scores = fig.subplots(1, 2)

    small = [r for r in table.rows if r.metric != "KB"]
    xs = range(len(small))
    width = 0.27
    for i, (name, attr) in enumerate((("M_A", "m_a"), ("M_AB", "m_ab"), ("M_C", "m_c"))):
        counts.bar([x + (i - 1) * width for x in xs], [getattr(r, attr) for r in small], width, label=name)
    counts.set_xticks(list(xs), [r.metric for r in small], rotation=30)
    counts.set_title("Element counts")
    counts.legend()

    xs = range(len(metrics))
    for i, (name, attr) in enumerate((("Precision", "precision"), ("Recall", "recall"), ("F-measure", "f_measure"))):
        scores.bar([x + (i - 1) * width for x in xs], [getattr(r, attr) for r in table.rows], width, label=name)
    scores.set_xticks(list(xs), metrics, rotation=30)
    scores.set_ylim(0, 1.05)
    scores.set_title(f"Scores (average F = {table.average_f:.2f})")
    scores.legend(loc="lower right")

    fig.suptitle(table.name)
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps the PNG bytes stable between runs
    fig.savefig(out, format="png", dpi=100, metadata={"Software": None})
    return out
