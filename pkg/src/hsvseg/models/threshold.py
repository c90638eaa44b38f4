"""Deterministic threshold oracle: a weight-free segmenter for pipeline tests."""

from __future__ import annotations

import numpy as np

from ..datamodel import BoundingBox
from .base import PatchPrediction, Segmenter

LOGIT_MAGNITUDE = 8.0


def otsu_threshold(pixels: np.ndarray, bins: int = 256,
                   min_separation: float = 0.0) -> float | None:
    """Maximum between-class-variance split over a histogram of [0, 1].

    Returns the midpoint of the two class means, which is robust to the small
    mass of boundary pixels that bilinear resizing blends between the modes.
    Returns None (no foreground) when every pixel falls in a single bin or
    when the class separation is below ``min_separation``.
    """
    values = np.asarray(pixels, dtype=np.float64).ravel()
    idx = np.minimum((values * bins).astype(np.int64), bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    centers = (np.arange(bins) + 0.5) / bins

    w0 = np.cumsum(counts)[:-1]          # mass of bins 0..k
    w1 = counts.sum() - w0
    valid = (w0 > 0) & (w1 > 0)
    if not valid.any():
        return None
    sum0 = np.cumsum(counts * centers)[:-1]
    mu0 = np.where(valid, sum0 / np.where(w0 > 0, w0, 1.0), 0.0)
    mu1 = np.where(valid, (counts @ centers - sum0) / np.where(w1 > 0, w1, 1.0), 0.0)
    between = np.where(valid, w0 * w1 * (mu1 - mu0) ** 2, -1.0)
    k = int(np.argmax(between))
    if mu1[k] - mu0[k] < min_separation:
        return None
    return float((mu0[k] + mu1[k]) / 2.0)


class ThresholdSegmenter(Segmenter):
    """Otsu thresholding on a 256-bin histogram; ignores the box prompt.

    ``min_separation`` rejects patches whose two histogram classes are closer
    than the given intensity gap (pure-noise cells), mapping them to empty
    masks; constant patches are likewise empty.
    """

    backend = "threshold"

    def __init__(self, patch_resolution: int = 256, min_separation: float = 0.2,
                 bins: int = 256):
        super().__init__(patch_resolution)
        if not (0.0 <= min_separation < 1.0):
            raise ValueError("min_separation must lie in [0, 1)")
        self.min_separation = min_separation
        self.bins = bins

    def predict(self, image: np.ndarray, box: BoundingBox | None = None) -> PatchPrediction:
        image = self._check_patch(image, box)
        threshold = otsu_threshold(image, bins=self.bins, min_separation=self.min_separation)
        if threshold is None:
            logits = np.full(image.shape, -LOGIT_MAGNITUDE, dtype=np.float32)
        else:
            logits = np.where(image > threshold, LOGIT_MAGNITUDE, -LOGIT_MAGNITUDE)
        return PatchPrediction.from_logits(logits.astype(np.float32))
