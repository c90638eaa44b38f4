import numpy as np
import pytest

from hsvseg.datamodel import BoundingBox
from hsvseg.errors import CheckpointError, NoTrainableParametersError
from hsvseg.models import (PatchPrediction, build_miniature_foundation,
                           load_segmenter, otsu_threshold, segment_patch,
                           trainable_parameters)
from hsvseg.models.base import parameter_digest


def brute_force_otsu(pixels: np.ndarray, bins: int = 256):
    """Independent oracle: exhaustive split search, midpoint-of-means threshold."""
    values = pixels.ravel()
    idx = np.minimum((values * bins).astype(int), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(float)
    centers = (np.arange(bins) + 0.5) / bins
    best_var, best_t = -1.0, None
    for k in range(bins - 1):
        w0 = counts[: k + 1].sum()
        w1 = counts[k + 1:].sum()
        if w0 == 0 or w1 == 0:
            continue
        mu0 = (counts[: k + 1] * centers[: k + 1]).sum() / w0
        mu1 = (counts[k + 1:] * centers[k + 1:]).sum() / w1
        var = w0 * w1 * (mu1 - mu0) ** 2
        if var > best_var:
            best_var = var
            best_t = (mu0 + mu1) / 2
    return best_t


class TestThresholdBackend:
    def test_load_without_checkpoint(self):
        seg = load_segmenter("threshold", patch_resolution=64)
        assert seg.backend == "threshold"
        with pytest.raises(NoTrainableParametersError):
            trainable_parameters(seg)

    def test_checkpoint_ref_is_rejected(self):
        with pytest.raises(ValueError):
            load_segmenter("threshold", "some/path.pt")

    def test_all_zero_patch_gives_empty_mask(self):
        seg = load_segmenter("threshold", patch_resolution=32)
        pred = seg.predict(np.zeros((32, 32), np.float32))
        assert not pred.mask.labels.any()

    def test_two_level_patch_matches_bruteforce_otsu(self):
        rng = np.random.default_rng(0)
        fg = rng.random((64, 64)) < 0.3
        patch = np.where(fg, 0.8, 0.2).astype(np.float32)
        expected_t = brute_force_otsu(patch)
        assert 0.2 < expected_t < 0.8
        got = otsu_threshold(patch, min_separation=0.2)
        assert got == pytest.approx(expected_t, abs=1e-12)
        seg = load_segmenter("threshold", patch_resolution=64)
        pred = seg.predict(patch)
        assert np.array_equal(pred.mask.labels, fg.astype(np.uint8))

    def test_low_separation_patch_maps_to_empty(self):
        rng = np.random.default_rng(1)
        noise = np.clip(0.5 + rng.normal(0, 0.02, (64, 64)), 0, 1).astype(np.float32)
        seg = load_segmenter("threshold", patch_resolution=64, min_separation=0.2)
        assert not seg.predict(noise).mask.labels.any()

    def test_determinism(self):
        rng = np.random.default_rng(2)
        patch = rng.random((64, 64)).astype(np.float32)
        seg = load_segmenter("threshold", patch_resolution=64)
        a = seg.predict(patch)
        b = seg.predict(patch)
        assert np.array_equal(a.logits, b.logits)
        assert np.array_equal(a.mask.labels, b.mask.labels)

    def test_wrong_resolution_rejected(self):
        seg = load_segmenter("threshold", patch_resolution=64)
        with pytest.raises(ValueError):
            seg.predict(np.zeros((32, 32), np.float32))

    def test_box_outside_patch_rejected(self):
        seg = load_segmenter("threshold", patch_resolution=64)
        with pytest.raises(ValueError):
            segment_patch(seg, np.zeros((64, 64), np.float32),
                          BoundingBox(0, 0, 65, 64))


class TestPatchPrediction:
    def test_invariants(self):
        logits = np.array([[-3.0, 0.5], [2.0, -0.1]], dtype=np.float32)
        pred = PatchPrediction.from_logits(logits)
        assert pred.probabilities.min() >= 0 and pred.probabilities.max() <= 1
        assert np.array_equal(pred.mask.labels, (pred.probabilities > 0.5).astype(np.uint8))


class TestUNetBackend:
    def test_seeded_initialization_is_reproducible(self):
        a = load_segmenter("unet", patch_resolution=64, seed=5, base_channels=8, depth=2)
        b = load_segmenter("unet", patch_resolution=64, seed=5, base_channels=8, depth=2)
        assert parameter_digest(a.named_parameters()) == parameter_digest(b.named_parameters())
        c = load_segmenter("unet", patch_resolution=64, seed=6, base_channels=8, depth=2)
        assert parameter_digest(a.named_parameters()) != parameter_digest(c.named_parameters())

    def test_all_parameters_trainable(self):
        seg = load_segmenter("unet", patch_resolution=64, base_channels=8, depth=2)
        assert len(seg.trainable_parameters()) == len(list(seg.model.parameters()))
        assert seg.frozen_parameters() == []

    def test_predict_shape_and_determinism(self):
        seg = load_segmenter("unet", patch_resolution=64, base_channels=8, depth=2)
        rng = np.random.default_rng(3)
        patch = rng.random((64, 64)).astype(np.float32)
        a = seg.predict(patch)
        b = seg.predict(patch, BoundingBox(0, 0, 64, 64))  # box is ignored
        assert a.logits.shape == (64, 64)
        assert np.array_equal(a.logits, b.logits)

    def test_resolution_must_match_depth(self):
        with pytest.raises(ValueError):
            load_segmenter("unet", patch_resolution=100, base_channels=8, depth=4)


class TestFoundationBackend:
    def test_requires_checkpoint(self):
        with pytest.raises(ValueError):
            load_segmenter("foundation")

    def test_missing_checkpoint_file(self, tmp_path):
        # a nonexistent path is treated as a registry id and fails to resolve
        with pytest.raises(Exception):
            load_segmenter("foundation", str(tmp_path / "nope" / "missing.pt"))

    def test_partition_nonempty(self, tiny_foundation_checkpoint):
        seg = load_segmenter("foundation", tiny_foundation_checkpoint)
        assert len(seg.frozen_parameters()) > 0
        assert len(seg.trainable_parameters()) > 0
        frozen_names = [n for n, p in seg.named_parameters() if not p.requires_grad]
        assert all(not n.startswith("mask_decoder") for n in frozen_names)
        trainable_names = [n for n, p in seg.named_parameters() if p.requires_grad]
        assert all(n.startswith("mask_decoder") for n in trainable_names)

    def test_predict_shape_box_sensitivity_determinism(self, tiny_foundation_checkpoint):
        seg = load_segmenter("foundation", tiny_foundation_checkpoint)
        rng = np.random.default_rng(4)
        patch = rng.random((256, 256)).astype(np.float32)
        a = seg.predict(patch, BoundingBox(0, 0, 256, 256))
        b = seg.predict(patch, BoundingBox(0, 0, 256, 256))
        c = seg.predict(patch, BoundingBox(32, 32, 128, 128))
        assert a.logits.shape == (256, 256)
        assert np.array_equal(a.logits, b.logits)
        assert not np.array_equal(a.logits, c.logits)

    def test_multimask_selects_highest_scoring(self):
        import torch

        seg = build_miniature_foundation(seed=3, patch_resolution=256)
        seg.multimask = True
        rng = np.random.default_rng(5)
        patch = rng.random((256, 256)).astype(np.float32)
        with torch.no_grad():
            pixel = seg._preprocess([patch])
            boxes = seg._prompt_boxes([BoundingBox(0, 0, 256, 256)], 1)
            out = seg.model(pixel_values=pixel, input_boxes=boxes, multimask_output=True)
            best = int(out.iou_scores[0, 0].argmax())
            import torch.nn.functional as F
            expected = F.interpolate(out.pred_masks[0, 0][best][None, None],
                                     size=(256, 256), mode="bilinear",
                                     align_corners=False)[0, 0].numpy()
        got = seg.predict(patch, BoundingBox(0, 0, 256, 256))
        assert np.allclose(got.logits, expected, atol=1e-6)


class TestBatchedPrediction:
    def test_batch_equals_sequential(self, tiny_foundation_checkpoint):
        seg = load_segmenter("foundation", tiny_foundation_checkpoint)
        rng = np.random.default_rng(6)
        images = [rng.random((256, 256)).astype(np.float32) for _ in range(3)]
        boxes = [BoundingBox(0, 0, 256, 256)] * 3
        batched = seg.predict_batch(images, boxes)
        sequential = [seg.predict(img, box) for img, box in zip(images, boxes)]
        for b, s in zip(batched, sequential):
            assert np.array_equal(b.logits, s.logits)
            assert np.array_equal(b.mask.labels, s.mask.labels)


def test_unknown_backend():
    with pytest.raises(ValueError):
        load_segmenter("transformer")


def test_checkpoint_backend_mismatch(tmp_path, tiny_foundation_checkpoint):
    with pytest.raises(CheckpointError):
        load_segmenter("unet", tiny_foundation_checkpoint)
