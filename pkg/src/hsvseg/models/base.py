"""Uniform promptable-segmenter interface shared by all backends."""

from __future__ import annotations

import hashlib
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from ..datamodel import BinaryMask, BoundingBox
from ..errors import NoTrainableParametersError

BACKENDS = ("foundation", "unet", "threshold")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class PatchPrediction:
    """Raw logits, probabilities, and the thresholded mask for one patch."""

    logits: np.ndarray
    probabilities: np.ndarray
    mask: BinaryMask

    @classmethod
    def from_logits(cls, logits: np.ndarray) -> "PatchPrediction":
        logits = np.asarray(logits, dtype=np.float32)
        probs = _sigmoid(logits)
        return cls(logits=logits, probabilities=probs,
                   mask=BinaryMask((probs > 0.5).astype(np.uint8)))


class Segmenter(ABC):
    """A model that maps (image patch, box prompt) to a binary mask.

    Inference is read-only on weights; predictions are deterministic given
    weights and inputs.
    """

    backend: str = ""

    def __init__(self, patch_resolution: int):
        if patch_resolution < 1:
            raise ValueError("patch_resolution must be >= 1")
        self.patch_resolution = patch_resolution

    def _check_patch(self, image: np.ndarray, box: BoundingBox | None) -> np.ndarray:
        image = np.asarray(image, dtype=np.float32)
        expected = (self.patch_resolution, self.patch_resolution)
        if image.shape != expected:
            raise ValueError(f"patch must have shape {expected}, got {image.shape}")
        if box is not None and (box.x_max > self.patch_resolution
                                or box.y_max > self.patch_resolution):
            raise ValueError(f"box {box.as_xyxy()} exceeds patch bounds")
        return image

    @abstractmethod
    def predict(self, image: np.ndarray, box: BoundingBox | None = None) -> PatchPrediction:
        """Segment one patch. Backends that do not consume prompts ignore ``box``."""

    def predict_batch(self, images, boxes) -> list[PatchPrediction]:
        """Segment several patches; bit-identical to sequential predict calls."""
        return [self.predict(img, box) for img, box in zip(images, boxes)]

    def trainable_parameters(self):
        raise NoTrainableParametersError(f"{self.backend} backend has no trainable parameters")

    def frozen_parameters(self):
        return []

    def forward_logits(self, images, boxes):
        """Differentiable batched forward pass used by the training loop."""
        raise NoTrainableParametersError(f"{self.backend} backend cannot be trained")

    def set_train_mode(self, training: bool) -> None:
        """Toggle train-time behavior (batch statistics); no-op by default."""

    def named_parameters(self):
        return []

    def state_payload(self) -> dict:
        """Backend-specific checkpoint payload (state dict + config)."""
        raise NoTrainableParametersError(f"{self.backend} backend has no state to checkpoint")


def parameter_digest(named_params) -> str:
    """SHA-256 over parameter names, shapes, and raw bytes, sorted by name."""
    digest = hashlib.sha256()
    for name, tensor in sorted(named_params, key=lambda item: item[0]):
        arr = tensor.detach().cpu().contiguous().numpy()
        digest.update(name.encode("utf-8"))
        digest.update(str(arr.shape).encode("utf-8"))
        digest.update(str(arr.dtype).encode("utf-8"))
        digest.update(arr.tobytes())
    return digest.hexdigest()
