"""Grayscale image decode/encode (8/16-bit PNG and TIFF) and manifest-entry loading."""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from .datamodel import BinaryMask, Frame, ManifestEntry
from .preprocess import ReferenceFrame, binarize_mask, subtract_reference, to_grayscale


def read_gray(path: str | Path) -> np.ndarray:
    """Read an image preserving bit depth; color images come back as RGB."""
    arr = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if arr is None:
        raise IOError(f"could not decode image {path}")
    if arr.ndim == 3 and arr.shape[2] >= 3:
        arr = cv2.cvtColor(arr[:, :, :3], cv2.COLOR_BGR2RGB)
    return arr


def write_mask_png(path: str | Path, mask: BinaryMask) -> None:
    """Write a binary mask as 8-bit PNG with foreground at 255."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), (mask.labels * 255).astype(np.uint8)):
        raise IOError(f"could not write {path}")


def write_gray16_png(path: str | Path, pixels01: np.ndarray) -> None:
    """Write [0, 1] intensities as 16-bit PNG."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.round(np.asarray(pixels01, dtype=np.float64) * 65535.0).astype(np.uint16)
    if not cv2.imwrite(str(path), data):
        raise IOError(f"could not write {path}")


def load_entry(entry: ManifestEntry, root: str | Path = ".",
               apply_reference: bool = True) -> tuple[Frame, BinaryMask | None]:
    """Load and preprocess one manifest entry.

    The frame is decoded, converted to grayscale, and, when the entry carries
    a reference path (and ``apply_reference`` is set), reference-subtracted
    and contrast-stretched. The mask is binarized; entries without a mask on
    disk return ``None`` for it only when the manifest omits the path.
    """
    root = Path(root)
    frame = to_grayscale(read_gray(root / entry.frame_path),
                         modality=entry.modality, frame_index=entry.frame_index)
    if apply_reference and entry.reference_path is not None:
        ref = to_grayscale(read_gray(root / entry.reference_path))
        reference = ReferenceFrame(ref.pixels, modality=entry.modality)
        frame = subtract_reference(frame, reference)
    mask = binarize_mask(read_gray(root / entry.mask_path)) if entry.mask_path else None
    return frame, mask
