"""Segmenter backends: promptable foundation model, U-Net baseline, and the
threshold oracle."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..datamodel import BoundingBox
from .base import BACKENDS, PatchPrediction, Segmenter, parameter_digest
from .foundation import DEFAULT_FOUNDATION_REF, FoundationSegmenter, build_miniature_foundation
from .threshold import ThresholdSegmenter, otsu_threshold
from .unet import UNet, UNetSegmenter

__all__ = [
    "BACKENDS", "DEFAULT_FOUNDATION_REF", "FoundationSegmenter", "PatchPrediction",
    "Segmenter", "ThresholdSegmenter", "UNet", "UNetSegmenter",
    "build_miniature_foundation", "load_segmenter", "otsu_threshold",
    "parameter_digest", "segment_patch", "trainable_parameters",
]


def load_segmenter(backend: str, checkpoint_ref: str | None = None,
                   patch_resolution: int = 256, seed: int = 0,
                   **options) -> Segmenter:
    """Construct a ready segmenter.

    ``checkpoint_ref`` is an opaque string: a saved checkpoint file, a local
    pretrained-model directory, or a registry identifier. It is required for
    the foundation backend, optional for unet (absent means seeded random
    initialization), and forbidden for threshold.
    """
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}, expected one of {BACKENDS}")

    if backend == "threshold":
        if checkpoint_ref is not None:
            raise ValueError("threshold backend takes no checkpoint")
        return ThresholdSegmenter(patch_resolution=patch_resolution, **options)

    if backend == "unet":
        if checkpoint_ref is None:
            return UNetSegmenter(patch_resolution=patch_resolution, seed=seed, **options)
        return _load_from_checkpoint(checkpoint_ref, expected_backend="unet")

    # foundation
    if checkpoint_ref is None:
        raise ValueError("foundation backend requires a checkpoint reference")
    path = Path(checkpoint_ref)
    if path.is_file():
        return _load_from_checkpoint(checkpoint_ref, expected_backend="foundation")
    # local pretrained directory or registry identifier
    return FoundationSegmenter.from_reference(checkpoint_ref,
                                              patch_resolution=patch_resolution,
                                              **options)


def _load_from_checkpoint(path: str, expected_backend: str) -> Segmenter:
    from ..training import load_checkpoint

    return load_checkpoint(path, expected_backend=expected_backend)


def segment_patch(segmenter: Segmenter, image_patch: np.ndarray,
                  box: BoundingBox | None = None) -> PatchPrediction:
    """Segment one patch at the segmenter's patch resolution."""
    return segmenter.predict(image_patch, box)


def trainable_parameters(segmenter: Segmenter):
    """Exactly the trainable partition; optimizers consume only this set."""
    return segmenter.trainable_parameters()
