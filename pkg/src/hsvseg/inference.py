"""Single-frame and composite-sequence segmentation: grid-prompted patch
prediction, stitching, and metric evaluation."""

from __future__ import annotations

from typing import Sequence

from .datamodel import AggregateStats, BinaryMask, BoundingBox, Frame, MetricsReport
from .errors import EmptyMaskError
from .metrics import aggregate_all, compute_metrics, confusion
from .models import Segmenter
from .patching import DEFAULT_CELL_SIZE, patchify, resize_patch, stitch, tight_box


def segment_frame(segmenter: Segmenter, frame: Frame,
                  cell_size: int = DEFAULT_CELL_SIZE,
                  proposal_segmenter: Segmenter | None = None) -> BinaryMask:
    """Segment a full frame: pad to the grid, predict every cell with its grid
    box, stitch, and crop back to the original dimensions.

    With ``proposal_segmenter``, each cell is first segmented by the proposal
    backend and its prediction's tight box (falling back to the full-cell box
    when the proposal is empty) prompts the main segmenter.
    """
    resolution = segmenter.patch_resolution
    patch_set = patchify(frame, None, cell_size=cell_size, drop_empty=False)
    resized = [resize_patch(p, resolution) for p in patch_set.patches]
    full_box = BoundingBox(0, 0, resolution, resolution)

    boxes: list[BoundingBox] = []
    for patch in resized:
        box = full_box
        if proposal_segmenter is not None:
            proposal = proposal_segmenter.predict(patch.image)
            try:
                box = tight_box(proposal.mask, jitter=0)
            except EmptyMaskError:
                box = full_box
        boxes.append(box)

    predictions = segmenter.predict_batch([p.image for p in resized], boxes)
    placed = [(pred.mask, patch.row, patch.col)
              for pred, patch in zip(predictions, resized)]
    return stitch(placed, patch_set.geometry)


def evaluate_frame(segmenter: Segmenter, frame: Frame, gt: BinaryMask,
                   cell_size: int = DEFAULT_CELL_SIZE) -> MetricsReport:
    """Segment one frame and score it against ground truth."""
    if (gt.height, gt.width) != (frame.height, frame.width):
        raise ValueError(
            f"ground truth {(gt.height, gt.width)} must match frame "
            f"{(frame.height, frame.width)}")
    predicted = segment_frame(segmenter, frame, cell_size=cell_size)
    return compute_metrics(*confusion(predicted, gt))


def segment_sequence(segmenter: Segmenter, frames: Sequence[Frame],
                     gts: Sequence[BinaryMask] | None = None,
                     cell_size: int = DEFAULT_CELL_SIZE,
                     ) -> tuple[list[BinaryMask], list[MetricsReport] | None,
                                dict[str, AggregateStats] | None]:
    """Segment an ordered sequence frame by frame (no temporal coupling).

    When ground truths are given, also returns per-frame reports and
    mean/min/max/std aggregates for every metric.
    """
    if gts is not None and len(gts) != len(frames):
        raise ValueError(f"{len(frames)} frames but {len(gts)} ground-truth masks")
    masks = [segment_frame(segmenter, frame, cell_size=cell_size) for frame in frames]
    if gts is None:
        return masks, None, None
    reports = [compute_metrics(*confusion(mask, gt)) for mask, gt in zip(masks, gts)]
    return masks, reports, aggregate_all(reports)
