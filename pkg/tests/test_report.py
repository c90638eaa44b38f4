from pathlib import Path

import pytest

from hsvseg.metrics import compute_metrics, write_frame_reports_csv
from hsvseg.report import (read_scores_csv, render_results_table, report,
                           write_scores_csv)

DATA_DIR = Path(__file__).parent / "data"

#: The published per-fluid scores, keyed (fluid, model) -> (iou, f1).
PUBLISHED_SCORES = {
    ("Water", "unet"): (0.5619, 0.7191),
    ("Water", "sam_pretrained"): (0.0620, 0.1165),
    ("Water", "sam_finetuned"): (0.1894, 0.3143),
    ("FC-72", "unet"): (0.7244, 0.8400),
    ("FC-72", "sam_pretrained"): (0.5721, 0.7278),
    ("FC-72", "sam_finetuned"): (0.7997, 0.8885),
    ("Nitrogen", "unet"): (0.7547, 0.8602),
    ("Nitrogen", "sam_pretrained"): (0.6702, 0.8025),
    ("Nitrogen", "sam_finetuned"): (0.8317, 0.9080),
    ("Argon", "unet"): (0.7815, 0.8773),
    ("Argon", "sam_pretrained"): (0.6464, 0.7852),
    ("Argon", "sam_finetuned"): (0.8384, 0.9120),
}


def test_stored_scores_match_published_values():
    rows = read_scores_csv(DATA_DIR / "published_scores.csv")
    assert len(rows) == 12
    got = {(fluid, model): (iou, f1) for fluid, model, iou, f1 in rows}
    assert got == PUBLISHED_SCORES


def test_rendered_table_is_byte_identical_to_fixture():
    rows = read_scores_csv(DATA_DIR / "published_scores.csv")
    table = render_results_table(rows)
    fixture = (DATA_DIR / "results_table_fixture.txt").read_bytes()
    assert table.encode("utf-8") == fixture


def test_fixture_contains_all_24_published_values():
    fixture = (DATA_DIR / "results_table_fixture.txt").read_text()
    for (fluid, model), (iou, f1) in PUBLISHED_SCORES.items():
        row = next(line for line in fixture.splitlines()
                   if line.startswith(fluid) and model in line)
        assert f"{iou:.4f}" in row and f"{f1:.4f}" in row


def test_stored_frame_reports_reproduce_published_argon_row():
    """Aggregating stored per-frame reports yields the published fine-tuned
    Argon scores once formatted, and the rendered row matches the fixture."""
    from hsvseg.metrics import aggregate

    reports = [compute_metrics(tp=400, fp=30, fn=35, tn=9535),
               compute_metrics(tp=757, fp=80, fn=90, tn=9073)]
    mean_iou = aggregate(reports, "iou").mean
    mean_f1 = aggregate(reports, "f1").mean
    assert f"{mean_iou:.4f}" == "0.8384"
    assert f"{mean_f1:.4f}" == "0.9120"

    table = render_results_table([("Argon", "sam_finetuned", mean_iou, mean_f1)])
    rendered_row = table.splitlines()[-1]
    fixture = (DATA_DIR / "results_table_fixture.txt").read_text()
    fixture_row = next(line for line in fixture.splitlines()
                       if line.startswith("Argon") and "sam_finetuned" in line)
    assert rendered_row.split() == fixture_row.split()


def test_report_renders_table_and_is_rerender_stable(tmp_path):
    results = tmp_path / "results"
    results.mkdir()
    rows = read_scores_csv(DATA_DIR / "published_scores.csv")
    write_scores_csv(results / "scores.csv", rows)

    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    report(results, out_a)
    report(results, out_b)
    table_a = (out_a / "summary_table.txt").read_bytes()
    assert table_a == (out_b / "summary_table.txt").read_bytes()
    assert table_a == (DATA_DIR / "results_table_fixture.txt").read_bytes()


def test_report_missing_scores_names_the_input(tmp_path):
    empty = tmp_path / "results"
    empty.mkdir()
    with pytest.raises(FileNotFoundError, match="scores.csv"):
        report(empty, tmp_path / "out")


def test_report_single_frame_single_model_boxplot(tmp_path):
    results = tmp_path / "results"
    results.mkdir()
    write_scores_csv(results / "scores.csv", [("Argon", "threshold", 1.0, 1.0)])
    write_frame_reports_csv(results / "frames__threshold__Argon.csv",
                            [compute_metrics(10, 0, 0, 90)], [0])
    outputs = report(results, tmp_path / "out")
    assert len(outputs["plots"]) == 2
    for plot in outputs["plots"]:
        assert Path(plot).stat().st_size > 0


def test_boxplot_rerender_byte_stable(tmp_path):
    results = tmp_path / "results"
    results.mkdir()
    write_scores_csv(results / "scores.csv", [("Argon", "threshold", 0.9, 0.95)])
    reports = [compute_metrics(8, 1, 1, 90), compute_metrics(9, 1, 0, 90),
               compute_metrics(7, 2, 1, 90)]
    write_frame_reports_csv(results / "frames__threshold__Argon.csv", reports)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    report(results, out_a)
    report(results, out_b)
    assert (out_a / "box_iou.png").read_bytes() == (out_b / "box_iou.png").read_bytes()
