"""Delimited reports and companion figures.

The CLI's report path writes machine-readable CSV and, alongside it, a
rendered figure of the same content: a probability heatmap for ranked
configurations, a rate-versus-requirement bar chart for fulfillment
windows. CSV bytes are deterministic; figures are best-effort renderings
for humans.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .reconfig import RankedConfigs
from .slo import KIND_MINIMIZE, FulfillmentReport, SloSpec


def _fmt(p: float | None) -> str:
    return "" if p is None else f"{p:.6f}"


def config_report_table(ranked: RankedConfigs, slos: Sequence[SloSpec]) -> tuple[list[str], list[list[str]]]:
    """Header and rows shared by the CSV writer and the CLI table printer."""
    params = sorted({k for s in ranked.scores for k in s.config.assignment})
    prob_names = [s.name for s in slos if s.kind != KIND_MINIMIZE]
    obj_names = [s.name for s in slos if s.kind == KIND_MINIMIZE]
    header = (["rank"] + params + [f"p({n})" for n in prob_names]
              + [f"E({n})" for n in obj_names] + ["min_prob", "objective", "feasible"])
    rows = []
    for rank, score in enumerate(ranked.scores, start=1):
        row = [str(rank)]
        row += [score.config.assignment.get(p, "") for p in params]
        row += [_fmt(score.probabilities.get(n)) for n in prob_names]
        row += [_fmt(score.objectives.get(n)) for n in obj_names]
        row += [_fmt(score.min_probability), _fmt(score.objective),
                "yes" if score.feasible else "no"]
        rows.append(row)
    return header, rows


def write_config_report(path: str | Path, ranked: RankedConfigs, slos: Sequence[SloSpec]) -> None:
    header, rows = config_report_table(ranked, slos)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def render_config_figure(path: str | Path, ranked: RankedConfigs, slos: Sequence[SloSpec]) -> None:
    """Heatmap of per-SLO probabilities over the ranked configurations."""
    prob_names = [s.name for s in slos if s.kind != KIND_MINIMIZE]
    matrix = np.array([
        [score.probabilities.get(n, np.nan) for n in prob_names]
        for score in ranked.scores
    ])
    labels = [score.config.describe() for score in ranked.scores]
    height = max(2.5, 0.22 * len(labels) + 1.2)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.6 * len(prob_names) + 3), height))
    image = ax.imshow(matrix, aspect="auto", vmin=0.0, vmax=1.0, cmap="RdYlGn")
    ax.set_xticks(range(len(prob_names)), prob_names, rotation=30, ha="right", fontsize=8)
    ax.set_yticks(range(len(labels)), labels, fontsize=6)
    ax.set_ylabel("configurations (ranked)")
    fig.colorbar(image, ax=ax, label="fulfillment probability")
    ax.set_title("SLO fulfillment probability per configuration")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def fulfillment_table(report: FulfillmentReport) -> tuple[list[str], list[list[str]]]:
    header = ["slo", "kind", "rate", "mean", "p_min", "samples", "violated"]
    rows = []
    for r in report.results:
        rows.append([
            r.name, r.kind, _fmt(r.rate), _fmt(r.mean_value), _fmt(r.p_min),
            str(r.sample_count), "yes" if r.violated else "no",
        ])
    return header, rows


def write_fulfillment_report(path: str | Path, report: FulfillmentReport) -> None:
    header, rows = fulfillment_table(report)
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def render_fulfillment_figure(path: str | Path, report: FulfillmentReport) -> None:
    """Bar chart of observed rates against their required probabilities."""
    rated = [r for r in report.results if r.rate is not None]
    fig, ax = plt.subplots(figsize=(max(5.0, 1.3 * len(rated) + 2), 3.5))
    positions = np.arange(len(rated))
    colors = ["#c0392b" if r.violated else "#27ae60" for r in rated]
    ax.bar(positions, [r.rate for r in rated], color=colors)
    for pos, r in zip(positions, rated):
        if r.p_min is not None:
            ax.plot([pos - 0.45, pos + 0.45], [r.p_min, r.p_min],
                    color="black", linewidth=1.2, linestyle="--")
    ax.set_xticks(positions, [r.name for r in rated], rotation=20, ha="right", fontsize=8)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("observed rate")
    ax.set_title("SLO fulfillment (dashed: required)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    """Fixed-width text table for terminal output."""
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    out = io.StringIO()
    out.write("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for row in rows:
        out.write("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n")
    return out.getvalue()
