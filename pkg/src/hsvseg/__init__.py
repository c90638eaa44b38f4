"""High-speed-video phase-detection segmentation toolkit.

Preprocessing, grid patchification, promptable-model fine-tuning with frozen
encoders, patch-stitched inference, multi-metric evaluation, and a seeded
synthetic bubble dataset for desk-scale verification.
"""

from .datamodel import (AggregateStats, BinaryMask, BoundingBox, Condition,
                        DatasetManifest, Frame, GridGeometry, HSV_MODALITIES,
                        ManifestEntry, MetricsReport, Modality, validate_manifest)
from .inference import evaluate_frame, segment_frame, segment_sequence
from .metrics import aggregate, compute_metrics, confusion
from .models import load_segmenter, segment_patch, trainable_parameters
from .patching import (grid_boxes, pad_to_grid, Patch, PatchSet, patchify,
                       resize_patch, stitch, tight_box)
from .preprocess import ReferenceFrame, binarize_mask, subtract_reference, to_grayscale
from .synthdata import PRESETS, SynthPreset, generate_dataset, generate_frame
from .training import (EpochLog, TrainConfig, bce_loss, combined_loss, dice_loss,
                       load_checkpoint, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "AggregateStats", "BinaryMask", "BoundingBox", "Condition", "DatasetManifest",
    "EpochLog", "Frame", "GridGeometry", "HSV_MODALITIES", "ManifestEntry",
    "MetricsReport", "Modality", "Patch", "PatchSet", "PRESETS", "ReferenceFrame",
    "SynthPreset", "TrainConfig", "aggregate", "bce_loss", "binarize_mask",
    "combined_loss", "compute_metrics", "confusion", "dice_loss", "evaluate_frame",
    "generate_dataset", "generate_frame", "grid_boxes", "load_checkpoint",
    "load_segmenter", "pad_to_grid", "patchify", "resize_patch", "save_checkpoint",
    "segment_frame", "segment_patch", "segment_sequence", "stitch",
    "subtract_reference", "tight_box", "to_grayscale", "train",
    "trainable_parameters", "validate_manifest",
]
