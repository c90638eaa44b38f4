"""Frame and mask normalization: grayscale conversion, blank-reference
subtraction with contrast stretching, and mask binarization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datamodel import BinaryMask, Frame

# Rec. 601 luminance weights for RGB inputs.
_LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114], dtype=np.float64)


@dataclass(frozen=True)
class ReferenceFrame:
    """Noise-free blank background for one modality, in [0, 1]."""

    pixels: np.ndarray
    modality: str = "unknown"

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2:
            raise ValueError("reference pixels must be 2-D")
        if float(px.min()) < 0.0 or float(px.max()) > 1.0:
            raise ValueError("reference intensities must lie in [0, 1]")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)


def _scale_to_unit(arr: np.ndarray) -> np.ndarray:
    """Scale raw intensities to [0, 1] according to their dtype."""
    if np.issubdtype(arr.dtype, np.integer):
        info = np.iinfo(arr.dtype)
        if info.min < 0:
            raise ValueError(f"signed integer images are not supported ({arr.dtype})")
        return arr.astype(np.float64) / float(info.max)
    arr = arr.astype(np.float64)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise ValueError("float images must already be normalized to [0, 1]")
    return arr


def to_grayscale(image, modality: str = "unknown", frame_index: int = 0) -> Frame:
    """Convert a 1- or 3-channel image to a normalized grayscale Frame.

    3-channel inputs are assumed RGB and combined with the (0.299, 0.587,
    0.114) luminance weights. Integer inputs are scaled by their dtype range.
    """
    arr = np.asarray(image)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        gray = _scale_to_unit(arr)
    elif arr.ndim == 3 and arr.shape[2] == 3:
        gray = _scale_to_unit(arr) @ _LUMA_WEIGHTS
    else:
        raise ValueError(f"expected 1 or 3 channels, got array of shape {arr.shape}")
    if gray.shape[0] < 1 or gray.shape[1] < 1:
        raise ValueError("image must have nonzero dimensions")
    # Weighted sums can exceed 1.0 by a few ulp.
    return Frame(np.clip(gray, 0.0, 1.0), modality=modality, frame_index=frame_index)


def subtract_reference(frame: Frame, reference: ReferenceFrame) -> Frame:
    """Subtract the blank reference, clip negatives, and min-max stretch.

    A constant difference image maps to all zeros (blank frames legitimately
    occur in sequences).
    """
    if frame.pixels.shape != reference.pixels.shape:
        raise ValueError(
            f"frame {frame.pixels.shape} and reference {reference.pixels.shape} "
            "dimensions must match")
    diff = np.clip(frame.pixels.astype(np.float64) - reference.pixels.astype(np.float64),
                   0.0, None)
    lo, hi = float(diff.min()), float(diff.max())
    if hi == lo:
        stretched = np.zeros_like(diff)
    else:
        stretched = (diff - lo) / (hi - lo)
    return Frame(stretched, modality=frame.modality, frame_index=frame.frame_index)


def binarize_mask(raw) -> BinaryMask:
    """Map any numeric 2-D array to {0, 1}: strictly positive pixels become 1."""
    arr = np.asarray(raw)
    if arr.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
    return BinaryMask((arr > 0).astype(np.uint8))
