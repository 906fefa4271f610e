"""Result presentation: the five-column evaluation table and figures.

Tables render Model / Train Set / Accuracy / Balanced Accuracy / F1 with
one-decimal percentages, matching the layout used for detection results.
Figures are written headlessly (Agg backend) so report generation works
in batch jobs.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Sequence

from .corpus import REASON_TAXONOMY
from .metrics import DetectionReport

TABLE_HEADERS = ("Model", "Train Set", "Accuracy", "Balanced Accuracy", "F1")


def percent(value: float | None) -> str:
    """Fraction as a one-decimal percentage string; '-' when undefined.

    Rounds half away from zero on the decimal value so 0.8955 prints
    as 89.6 regardless of binary float representation.
    """
    if value is None:
        return "-"
    return str(Decimal(str(value * 100)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class ReportRow:
    model: str
    train_set: str
    report: DetectionReport

    def cells(self) -> tuple[str, str, str, str, str]:
        return (
            self.model,
            self.train_set,
            percent(self.report.accuracy),
            percent(self.report.balanced_accuracy),
            percent(self.report.f1),
        )

    def record(self) -> dict:
        """Machine-readable form carrying both percents and raw counts."""
        counts = self.report.counts
        return {
            "model": self.model,
            "train_set": self.train_set,
            "accuracy": percent(self.report.accuracy),
            "balanced_accuracy": percent(self.report.balanced_accuracy),
            "f1": percent(self.report.f1),
            "n": counts.tp + counts.fp + counts.tn + counts.fn,
        }


def render_table(rows: Sequence[ReportRow]) -> str:
    """Plain-text evaluation table in the standard five-column layout."""
    body = [row.cells() for row in rows]
    widths = [
        max(len(TABLE_HEADERS[col]), *(len(cells[col]) for cells in body)) if body
        else len(TABLE_HEADERS[col])
        for col in range(len(TABLE_HEADERS))
    ]

    def line(cells: Sequence[str]) -> str:
        return " | ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()

    rule = "-+-".join("-" * width for width in widths)
    return "\n".join([line(TABLE_HEADERS), rule, *[line(cells) for cells in body]])


def _use_agg():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def write_metrics_figure(rows: Sequence[ReportRow], path: str | Path) -> Path:
    """Grouped bar chart of accuracy / balanced accuracy / F1 per row."""
    plt = _use_agg()
    path = Path(path)
    labels = [f"{row.model}\n{row.train_set}" for row in rows]
    series = {
        "Accuracy": [row.report.accuracy for row in rows],
        "Balanced Accuracy": [row.report.balanced_accuracy for row in rows],
        "F1": [row.report.f1 for row in rows],
    }
    fig, ax = plt.subplots(figsize=(max(4.0, 2.2 * len(rows)), 4.0))
    width = 0.25
    for offset, (name, values) in enumerate(series.items()):
        xs = [i + (offset - 1) * width for i in range(len(rows))]
        heights = [v if v is not None else 0.0 for v in values]
        ax.bar(xs, heights, width=width, label=name)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0.0, 1.0)
    ax.set_ylabel("score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def write_tag_histogram_figure(
    histogram: dict[int, int], path: str | Path, title: str = "Reason tag frequency"
) -> Path:
    """Bar chart over the 14 reason tags; x axis labeled by tag id."""
    plt = _use_agg()
    path = Path(path)
    tags = sorted(REASON_TAXONOMY)
    counts = [histogram.get(tag, 0) for tag in tags]
    fig, ax = plt.subplots(figsize=(7.0, 3.5))
    ax.bar(tags, counts)
    ax.set_xticks(tags)
    ax.set_xlabel("reason tag")
    ax.set_ylabel("count")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
