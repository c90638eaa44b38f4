import numpy as np
import pytest

from hsvseg.datamodel import (AggregateStats, BinaryMask, BoundingBox, Condition,
                              DatasetManifest, Frame, GridGeometry, HSV_MODALITIES,
                              ManifestEntry, MetricsReport, Modality,
                              validate_manifest)
from hsvseg.errors import ManifestParseError
from hsvseg import imgio
from hsvseg.preprocess import binarize_mask


def test_modality_table_values():
    assert HSV_MODALITIES["Argon"].heat_flux_kw_m2 == 120.0
    assert HSV_MODALITIES["Nitrogen"].frame_count == 6000
    assert HSV_MODALITIES["FC72"].heat_flux_kw_m2 == 170.0
    water = HSV_MODALITIES["Water"]
    assert water.condition is Condition.FB
    assert water.mass_flux_kg_m2s == 500.0
    assert water.frame_count == 7500


def test_modality_mass_flux_iff_flow_boiling():
    with pytest.raises(ValueError):
        Modality("Argon", Condition.SPB, 120.0, 100, mass_flux_kg_m2s=500.0)
    with pytest.raises(ValueError):
        Modality("Water", Condition.FB, 3000.0, 100)
    with pytest.raises(ValueError):
        Modality("Argon", Condition.SPB, -1.0, 100)


def test_frame_rejects_out_of_range():
    with pytest.raises(ValueError):
        Frame(np.array([[0.0, 1.5]]))
    with pytest.raises(ValueError):
        Frame(np.zeros((0, 3)))


def test_frame_pixels_are_immutable():
    frame = Frame(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        frame.pixels[0, 0] = 1.0


def test_binary_mask_rejects_other_values():
    with pytest.raises(ValueError):
        BinaryMask(np.array([[0, 2]]))
    mask = BinaryMask(np.array([[0, 1], [1, 0]]))
    assert mask.foreground_count() == 2


def test_bounding_box_half_open():
    box = BoundingBox(5, 7, 6, 8)
    assert box.width == 1 and box.height == 1
    with pytest.raises(ValueError):
        BoundingBox(5, 5, 5, 6)
    with pytest.raises(ValueError):
        BoundingBox(-1, 0, 3, 3)


def test_grid_geometry_invariants():
    geom = GridGeometry.for_size(450, 300, 100)
    assert (geom.rows, geom.cols) == (5, 3)
    assert (geom.padded_height, geom.padded_width) == (500, 300)
    with pytest.raises(ValueError):
        GridGeometry(100, 5, 3, 500, 300, 350, 300)  # padding not minimal


def test_metrics_report_invariants():
    with pytest.raises(ValueError):
        MetricsReport(1, 1, 1, 1, iou=0.5, f1=0.6, precision=1, recall=1,
                      accuracy=1, specificity=1, dice=0.5)  # dice != f1
    report = MetricsReport(2, 1, 1, 12, iou=0.5, f1=2 / 3, precision=2 / 3,
                           recall=2 / 3, accuracy=0.875, specificity=12 / 13, dice=2 / 3)
    assert report.total == 16


def test_aggregate_stats_ordering():
    with pytest.raises(ValueError):
        AggregateStats("iou", mean=0.9, min=0.1, max=0.5, std=0.1, n=3)


def _write_pair(root, rel_frame, rel_mask, shape=(20, 30)):
    rng = np.random.default_rng(0)
    imgio.write_gray16_png(root / rel_frame, rng.random(shape))
    imgio.write_mask_png(root / rel_mask, binarize_mask(rng.random(shape) > 0.5))


def _entry(i, split="train", **kw):
    defaults = dict(frame_path=f"frames/f{i}.png", mask_path=f"masks/f{i}.png",
                    modality="Argon", split=split, frame_index=i)
    defaults.update(kw)
    return ManifestEntry(**defaults)


def test_manifest_roundtrip(tmp_path):
    entries = tuple(_entry(i, split=s) for i, s in enumerate(("train", "train", "val", "test")))
    manifest = DatasetManifest(entries)
    path = tmp_path / "manifest.jsonl"
    manifest.write_jsonl(path)
    assert DatasetManifest.read_jsonl(path) == manifest


def test_manifest_parse_error_carries_line_number(tmp_path):
    path = tmp_path / "manifest.jsonl"
    path.write_text('{"frame": "a.png", "mask": "b.png", "modality": "Argon", '
                    '"split": "train", "index": 0}\nnot json\n')
    with pytest.raises(ManifestParseError, match="line 2"):
        DatasetManifest.read_jsonl(path)


def test_validate_manifest_clean(tmp_path):
    entries = []
    for i, split in enumerate(("train", "train", "val", "test")):
        _write_pair(tmp_path, f"frames/f{i}.png", f"masks/f{i}.png")
        entries.append(_entry(i, split=split))
    violations = validate_manifest(DatasetManifest(tuple(entries)), tmp_path)
    assert violations == []


def test_validate_manifest_dimension_mismatch(tmp_path):
    imgio.write_gray16_png(tmp_path / "frames/f0.png", np.zeros((100, 100)))
    imgio.write_mask_png(tmp_path / "masks/f0.png", BinaryMask(np.zeros((256, 256), np.uint8)))
    violations = validate_manifest(DatasetManifest((_entry(0),)), tmp_path)
    assert [v.kind for v in violations] == ["dimension-mismatch"]


def test_validate_manifest_duplicate_split(tmp_path):
    _write_pair(tmp_path, "frames/f0.png", "masks/f0.png")
    entries = (_entry(0, split="train"), _entry(0, split="test", frame_index=1))
    violations = validate_manifest(DatasetManifest(entries), tmp_path)
    assert [v.kind for v in violations] == ["duplicate-split"]


def test_validate_manifest_missing_file(tmp_path):
    violations = validate_manifest(DatasetManifest((_entry(0),)), tmp_path)
    kinds = {v.kind for v in violations}
    assert kinds == {"missing-file"}
    assert len(violations) == 2  # frame and mask both absent
