"""CSV/JSON/SVG report writers and descriptive summary tables.

Floats are written with ``repr`` so reruns are byte-identical.
"""
from __future__ import annotations

import csv
import io
from html import escape
from typing import Sequence

import numpy as np
import pandas as pd

from .dataset import Dataset
from .shapley import ExplanationSet, LocalReport


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    return repr(float(v))


def explanations_csv(expl: ExplanationSet) -> str:
    """Long format: one row per (row, feature)."""
    probs = 1.0 / (1.0 + np.exp(-expl.margins))
    rows = []
    for i in range(len(expl)):
        rid = i if expl.row_ids is None else expl.row_ids[i]
        for j, name in enumerate(expl.feature_names):
            rows.append([rid, name, _num(expl.phi[i, j]), _num(expl.base_value),
                         _num(expl.margins[i]), _num(probs[i])])
    return _csv(["row_id", "feature", "phi", "base_value", "margin", "probability"], rows)


def ranking_csv(ranked: Sequence[tuple[str, float]]) -> str:
    return _csv(["feature", "mean_abs_phi", "rank"],
                [[name, _num(v), r] for r, (name, v) in enumerate(ranked, start=1)])


def local_report_text(report: LocalReport) -> str:
    return "\n".join(report.lines()) + "\n"


def bar_chart_svg(ranked: Sequence[tuple[str, float]], top: int = 20,
                  title: str = "mean |SHAP| (log-odds)") -> str:
    """Horizontal bar chart of the ``top`` ranked features as standalone SVG."""
    items = list(ranked)[:top]
    bar_h, gap, label_w, plot_w = 18, 6, 320, 360
    height = 40 + len(items) * (bar_h + gap)
    vmax = max((v for _, v in items), default=0.0) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{label_w + plot_w + 80}" '
        f'height="{height}" font-family="sans-serif" font-size="12">',
        f'<text x="{label_w}" y="20" font-weight="bold">{escape(title)}</text>',
    ]
    for i, (name, v) in enumerate(items):
        y = 32 + i * (bar_h + gap)
        w = plot_w * v / vmax
        parts.append(f'<text x="{label_w - 6}" y="{y + 13}" text-anchor="end">{escape(name)}</text>')
        parts.append(f'<rect x="{label_w}" y="{y}" width="{w:.2f}" height="{bar_h}" fill="#1f77b4"/>')
        parts.append(f'<text x="{label_w + w + 4:.2f}" y="{y + 13}">{v:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def yearly_counts(d: Dataset) -> pd.DataFrame:
    f = d.frame
    g = f.groupby("year")["solved"].agg(solved="sum", total="size").reset_index()
    g["solved"] = g["solved"].astype(int)
    g["unsolved"] = g["total"] - g["solved"]
    return g[["year", "solved", "unsolved", "total"]]


def state_ratios(d: Dataset) -> pd.DataFrame:
    f = d.frame
    g = f.groupby("state")["solved"].agg(solved="sum", total="size").reset_index()
    g["solved"] = g["solved"].astype(int)
    g["unsolved"] = g["total"] - g["solved"]
    g["solved_ratio"] = g["solved"] / g["total"]
    return g[["state", "solved", "unsolved", "total", "solved_ratio"]]


def frame_csv(frame: pd.DataFrame) -> str:
    rows = [[_num(v) if isinstance(v, float) else v for v in row]
            for row in frame.itertuples(index=False, name=None)]
    return _csv(list(frame.columns), rows)


def totals(d: Dataset) -> dict:
    n = len(d)
    solved = int(d.labels.sum())
    return {"records": n, "solved": solved, "unsolved": n - solved,
            "unsolved_share": (n - solved) / n if n else float("nan")}
