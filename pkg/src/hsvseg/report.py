"""Rendering of evaluation outputs: summary score tables and per-metric box
plots. Pure renderer over stored CSV files."""

from __future__ import annotations

import csv
from pathlib import Path

from .metrics import read_frame_reports_csv

SCORES_CSV = "scores.csv"
SCORE_COLUMNS = ("fluid", "model", "iou", "f1")
FRAME_CSV_PREFIX = "frames__"
BOXPLOT_METRICS = ("iou", "f1")


def render_results_table(rows: list[tuple[str, str, float, float]]) -> str:
    """Fixed-width text table of per-fluid scores, one row per (fluid, model)."""
    header = ("Fluid", "Model", "IoU", "F1")
    body = [(fluid, model, f"{iou:.4f}", f"{f1:.4f}") for fluid, model, iou, f1 in rows]
    widths = [max(len(header[c]), *(len(r[c]) for r in body)) if body else len(header[c])
              for c in range(4)]
    lines = [
        "  ".join(header[c].ljust(widths[c]) for c in range(4)).rstrip(),
        "  ".join("-" * widths[c] for c in range(4)),
    ]
    for row in body:
        lines.append("  ".join(row[c].ljust(widths[c]) for c in range(4)).rstrip())
    return "\n".join(lines) + "\n"


def read_scores_csv(path: str | Path) -> list[tuple[str, str, float, float]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            rows.append((record["fluid"], record["model"],
                         float(record["iou"]), float(record["f1"])))
    return rows


def write_scores_csv(path: str | Path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORE_COLUMNS)
        for fluid, model, iou, f1 in rows:
            writer.writerow([fluid, model, f"{iou:.4f}", f"{f1:.4f}"])


def _frame_csv_key(path: Path) -> tuple[str, str]:
    stem = path.stem[len(FRAME_CSV_PREFIX):]
    parts = stem.split("__")
    if len(parts) != 2:
        raise ValueError(f"unrecognized per-frame CSV name {path.name}")
    return parts[0], parts[1]  # model, fluid


def render_box_plots(frame_csvs: list[Path], out_dir: Path) -> list[Path]:
    """One PNG per metric with a box for every (fluid, model) series."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = []
    for path in sorted(frame_csvs):
        model, fluid = _frame_csv_key(path)
        reports = [report for _, report in read_frame_reports_csv(path)]
        series.append((fluid, model, reports))
    series.sort(key=lambda item: (item[0], item[1]))

    written = []
    for metric in BOXPLOT_METRICS:
        fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(series)), 4.5))
        data = [[r.score(metric) for r in reports] for _, _, reports in series]
        labels = [f"{fluid}\n{model}" for fluid, model, _ in series]
        ax.boxplot(data, tick_labels=labels)
        ax.set_ylabel(metric.upper() if metric != "f1" else "F1")
        ax.set_ylim(-0.05, 1.05)
        ax.set_title(f"Per-frame {metric} by fluid and model")
        fig.tight_layout()
        out_path = out_dir / f"box_{metric}.png"
        fig.savefig(out_path, dpi=100, metadata={"Software": None})
        plt.close(fig)
        written.append(out_path)
    return written


def report(results_dir: str | Path, out_dir: str | Path) -> dict[str, list[str]]:
    """Render the summary table and box plots for a results directory.

    ``results_dir`` must contain ``scores.csv``; per-frame CSVs named
    ``frames__<model>__<fluid>.csv`` are plotted when present.
    """
    results_dir = Path(results_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    scores_path = results_dir / SCORES_CSV
    if not scores_path.exists():
        raise FileNotFoundError(f"required input {scores_path} is missing")
    table = render_results_table(read_scores_csv(scores_path))
    table_path = out_dir / "summary_table.txt"
    table_path.write_text(table, encoding="utf-8")

    frame_csvs = sorted(results_dir.glob(f"{FRAME_CSV_PREFIX}*.csv"))
    plots = render_box_plots(frame_csvs, out_dir) if frame_csvs else []
    return {"table": [str(table_path)], "plots": [str(p) for p in plots]}
