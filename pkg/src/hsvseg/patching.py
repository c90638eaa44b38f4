"""Grid patchification, patch resizing, prompt-box generation, and full-frame
mask stitching."""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .datamodel import BinaryMask, BoundingBox, Frame, GridGeometry
from .errors import EmptyMaskError

DEFAULT_CELL_SIZE = 100
DEFAULT_PATCH_RESOLUTION = 256


@dataclass(frozen=True)
class Patch:
    """One grid cell cut from a frame, optionally with its mask cell."""

    image: np.ndarray
    mask: BinaryMask | None
    row: int
    col: int
    geometry: GridGeometry

    def __post_init__(self):
        if not (0 <= self.row < self.geometry.rows):
            raise ValueError(f"row {self.row} outside grid of {self.geometry.rows} rows")
        if not (0 <= self.col < self.geometry.cols):
            raise ValueError(f"col {self.col} outside grid of {self.geometry.cols} cols")


@dataclass(frozen=True)
class PatchSet:
    """Ordered patches plus the geometry needed to stitch them back."""

    patches: tuple[Patch, ...]
    geometry: GridGeometry

    def __post_init__(self):
        object.__setattr__(self, "patches", tuple(self.patches))
        indices = [(p.row, p.col) for p in self.patches]
        if len(set(indices)) != len(indices):
            raise ValueError("patch grid indices must be unique")
        if len(indices) > self.geometry.rows * self.geometry.cols:
            raise ValueError("more patches than grid cells")

    def __len__(self) -> int:
        return len(self.patches)


def _pad_array(arr: np.ndarray, cell_size: int) -> tuple[np.ndarray, GridGeometry]:
    geom = GridGeometry.for_size(arr.shape[0], arr.shape[1], cell_size)
    padded = np.zeros((geom.padded_height, geom.padded_width), dtype=arr.dtype)
    padded[: arr.shape[0], : arr.shape[1]] = arr
    return padded, geom


def pad_to_grid(frame: Frame, cell_size: int = DEFAULT_CELL_SIZE) -> tuple[Frame, GridGeometry]:
    """Zero-pad bottom/right to the smallest cell multiple in each dimension."""
    if cell_size < 1:
        raise ValueError("cell_size must be >= 1")
    padded, geom = _pad_array(frame.pixels, cell_size)
    return Frame(padded, modality=frame.modality, frame_index=frame.frame_index), geom


def patchify(frame: Frame, mask: BinaryMask | None = None,
             cell_size: int = DEFAULT_CELL_SIZE, drop_empty: bool = False) -> PatchSet:
    """Cut a frame (and aligned mask) into non-overlapping cells, row-major.

    With ``drop_empty``, cells whose mask contains no foreground are removed;
    this requires a mask. Inference keeps all cells (no ground truth to
    filter on), so callers there pass ``drop_empty=False``.
    """
    if drop_empty and mask is None:
        raise ValueError("drop_empty requires a mask")
    if mask is not None and mask.labels.shape != frame.pixels.shape:
        raise ValueError(
            f"mask {mask.labels.shape} must match frame {frame.pixels.shape}")
    padded_img, geom = _pad_array(frame.pixels, cell_size)
    padded_mask = _pad_array(mask.labels, cell_size)[0] if mask is not None else None

    patches = []
    for row in range(geom.rows):
        for col in range(geom.cols):
            ys = slice(row * cell_size, (row + 1) * cell_size)
            xs = slice(col * cell_size, (col + 1) * cell_size)
            cell_mask = None
            if padded_mask is not None:
                cell = padded_mask[ys, xs]
                if drop_empty and not cell.any():
                    continue
                cell_mask = BinaryMask(cell)
            patches.append(Patch(padded_img[ys, xs].copy(), cell_mask, row, col, geom))
    return PatchSet(tuple(patches), geom)


def _floor_indices(src: int, dst: int) -> np.ndarray:
    # i_src = floor(i_dst * src / dst), exact in integer arithmetic
    return (np.arange(dst, dtype=np.int64) * src) // dst


def _center_indices(src: int, dst: int) -> np.ndarray:
    # i_src = floor((i_dst + 0.5) * src / dst); never reaches src for dst >= 1
    idx = ((2 * np.arange(dst, dtype=np.int64) + 1) * src) // (2 * dst)
    return np.minimum(idx, src - 1)


def _resize_mask_floor(labels: np.ndarray, target: int) -> np.ndarray:
    rows = _floor_indices(labels.shape[0], target)
    cols = _floor_indices(labels.shape[1], target)
    return labels[np.ix_(rows, cols)]


def resize_patch(patch: Patch, target: int = DEFAULT_PATCH_RESOLUTION) -> Patch:
    """Resize a square patch: bilinear for the image, nearest-neighbor with
    floor index mapping (i_src = floor(i_dst * src / dst)) for the mask."""
    h, w = patch.image.shape
    if h != w:
        raise ValueError(f"patch must be square, got {h}x{w}")
    if target < 1:
        raise ValueError("target resolution must be >= 1")
    if target == h:
        image = patch.image.copy()
    else:
        image = cv2.resize(patch.image.astype(np.float32), (target, target),
                           interpolation=cv2.INTER_LINEAR)
        np.clip(image, 0.0, 1.0, out=image)
    mask = None
    if patch.mask is not None:
        mask = BinaryMask(_resize_mask_floor(patch.mask.labels, target))
    return Patch(image, mask, patch.row, patch.col, patch.geometry)


def grid_boxes(geometry: GridGeometry) -> list[BoundingBox]:
    """One full-cell box per grid cell, row-major, in padded-frame coordinates."""
    cell = geometry.cell_size
    return [
        BoundingBox(col * cell, row * cell, (col + 1) * cell, (row + 1) * cell)
        for row in range(geometry.rows)
        for col in range(geometry.cols)
    ]


def tight_box(mask: BinaryMask, jitter: int = 0,
              rng: np.random.Generator | None = None) -> BoundingBox:
    """Minimal box enclosing all foreground, each side optionally pushed
    outward by an independent uniform integer in [0, jitter], clipped to the
    mask bounds."""
    ys, xs = np.nonzero(mask.labels)
    if ys.size == 0:
        raise EmptyMaskError("tight_box requires at least one foreground pixel")
    x_min, x_max = int(xs.min()), int(xs.max()) + 1
    y_min, y_max = int(ys.min()), int(ys.max()) + 1
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    if jitter > 0:
        rng = rng if rng is not None else np.random.default_rng()
        x_min = max(0, x_min - int(rng.integers(0, jitter + 1)))
        y_min = max(0, y_min - int(rng.integers(0, jitter + 1)))
        x_max = min(mask.width, x_max + int(rng.integers(0, jitter + 1)))
        y_max = min(mask.height, y_max + int(rng.integers(0, jitter + 1)))
    return BoundingBox(x_min, y_min, x_max, y_max)


def stitch(patch_masks, geometry: GridGeometry) -> BinaryMask:
    """Reassemble per-cell masks into a full-frame mask.

    Each patch mask is a square at any resolution and is resized back to the
    cell size with nearest-neighbor sampling at pixel centers
    (i_src = floor((i_dst + 0.5) * src / dst)); for upscale factors >= 2 this
    inverts the floor-mapped resize used by resize_patch exactly. Missing
    cells are filled with zeros and the result is cropped to the original
    (unpadded) dimensions.
    """
    cell = geometry.cell_size
    out = np.zeros((geometry.padded_height, geometry.padded_width), dtype=np.uint8)
    seen: set[tuple[int, int]] = set()
    for mask, row, col in patch_masks:
        if (row, col) in seen:
            raise ValueError(f"duplicate patch at grid cell ({row}, {col})")
        seen.add((row, col))
        if not (0 <= row < geometry.rows and 0 <= col < geometry.cols):
            raise ValueError(f"cell ({row}, {col}) outside grid "
                             f"{geometry.rows}x{geometry.cols}")
        labels = mask.labels
        if labels.shape[0] != labels.shape[1]:
            raise ValueError("patch masks must be square")
        if labels.shape[0] != cell:
            rows_idx = _center_indices(labels.shape[0], cell)
            cols_idx = _center_indices(labels.shape[1], cell)
            labels = labels[np.ix_(rows_idx, cols_idx)]
        out[row * cell:(row + 1) * cell, col * cell:(col + 1) * cell] = labels
    return BinaryMask(out[: geometry.original_height, : geometry.original_width])
