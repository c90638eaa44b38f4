"""The three evaluation campaigns: zero-shot generalization from one fluid,
multi-fluid fine-tuning, and the U-Net comparison table."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import imgio, metrics, report as report_mod
from .datamodel import BinaryMask, DatasetManifest, Frame
from .errors import ConfigurationError
from .inference import segment_sequence
from .models import Segmenter, load_segmenter
from .models.base import parameter_digest
from .patching import patchify, resize_patch, tight_box
from .training import TrainConfig, train

EXPERIMENTS = ("zero_shot", "multi_modality", "unet_comparison")

#: Model labels used in score tables and output file names.
LABEL_FINETUNED = "sam_finetuned"
LABEL_PRETRAINED = "sam_pretrained"
LABEL_UNET = "unet"


@dataclass
class ExperimentConfig:
    manifest_path: str
    out_dir: str
    foundation_checkpoint: str | None = None
    train_config: TrainConfig = field(default_factory=TrainConfig)
    cell_size: int = 100
    patch_resolution: int = 256
    box_jitter: int = 5
    unet_base_channels: int = 64
    unet_depth: int = 4
    seed: int = 0


@dataclass
class ExperimentResult:
    name: str
    eval_dir: str
    scores: list  # (fluid, model, mean_iou, mean_f1)
    run_record_path: str


def build_patch_dataset(pairs, cell_size: int, resolution: int, jitter: int,
                        seed: int) -> list:
    """(patch image, jittered tight box, mask) triples from frame/mask pairs.

    Cells without foreground are dropped; prompt boxes are the mask's tight
    box pushed outward by up to ``jitter`` pixels.
    """
    triples = []
    for pair_index, (frame, mask) in enumerate(pairs):
        rng = np.random.default_rng([seed, pair_index])
        patch_set = patchify(frame, mask, cell_size=cell_size, drop_empty=True)
        for patch in patch_set.patches:
            resized = resize_patch(patch, resolution)
            if not resized.mask.labels.any():
                continue  # downsampling can empty a sparse cell
            box = tight_box(resized.mask, jitter=jitter, rng=rng)
            triples.append((resized.image, box, resized.mask))
    return triples


def load_pairs(manifest: DatasetManifest, root: Path, split: str,
               modalities: list[str] | None = None) -> list[tuple[Frame, BinaryMask]]:
    pairs = []
    for entry in manifest.entries:
        if entry.split != split:
            continue
        if modalities is not None and entry.modality not in modalities:
            continue
        frame, mask = imgio.load_entry(entry, root)
        pairs.append((frame, mask))
    return pairs


def evaluate_model(segmenter: Segmenter, manifest: DatasetManifest, root: Path,
                   modality: str, split: str, eval_dir: Path, model_label: str,
                   cell_size: int) -> tuple[float, float]:
    """Evaluate one model on one modality's split; writes per-frame, aggregate,
    and pooled CSVs. Returns (mean iou, mean f1)."""
    entries = [e for e in manifest.entries
               if e.modality == modality and (split == "all" or e.split == split)]
    if not entries:
        raise ConfigurationError(f"no {split} entries for modality {modality}")
    frames, gts, indices = [], [], []
    for entry in entries:
        frame, mask = imgio.load_entry(entry, root)
        frames.append(frame)
        gts.append(mask)
        indices.append(entry.frame_index)
    _, reports, aggregates = segment_sequence(segmenter, frames, gts,
                                              cell_size=cell_size)
    stem = f"{model_label}__{modality}"
    metrics.write_frame_reports_csv(eval_dir / f"frames__{stem}.csv", reports, indices)
    metrics.write_aggregates_csv(eval_dir / f"aggregates__{stem}.csv",
                                 aggregates.values())
    pooled = metrics.pool_counts(reports)
    metrics.write_frame_reports_csv(eval_dir / f"pooled__{stem}.csv", [pooled], ["pooled"])
    return aggregates["iou"].mean, aggregates["f1"].mean


def _train_foundation(config: ExperimentConfig, manifest: DatasetManifest, root: Path,
                      modalities: list[str] | None, out_dir: Path) -> Segmenter:
    segmenter = load_segmenter("foundation", config.foundation_checkpoint,
                               patch_resolution=config.patch_resolution)
    _fit(segmenter, config, manifest, root, modalities, out_dir)
    return segmenter


def _fit(segmenter: Segmenter, config: ExperimentConfig, manifest: DatasetManifest,
         root: Path, modalities: list[str] | None, out_dir: Path) -> None:
    if config.train_config.epochs == 0:
        return
    # patches must match the segmenter's own resolution, which a restored
    # checkpoint fixes independently of config.patch_resolution
    resolution = segmenter.patch_resolution
    train_pairs = load_pairs(manifest, root, "train", modalities)
    val_pairs = load_pairs(manifest, root, "val", modalities)
    train_set = build_patch_dataset(train_pairs, config.cell_size,
                                    resolution, config.box_jitter, config.seed)
    val_set = build_patch_dataset(val_pairs, config.cell_size,
                                  resolution, 0, config.seed + 1)
    train(segmenter, train_set, val_set, config.train_config, out_dir=out_dir)


def run_experiment(name: str, config: ExperimentConfig) -> ExperimentResult:
    """Run one campaign end to end and emit CSVs, a score table, and a run record."""
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}, expected one of {EXPERIMENTS}")
    if config.foundation_checkpoint is None:
        raise ConfigurationError(f"experiment {name} requires a foundation checkpoint")

    manifest_path = Path(config.manifest_path)
    if not manifest_path.exists():
        raise ConfigurationError(f"manifest {manifest_path} does not exist")
    manifest = DatasetManifest.read_jsonl(manifest_path)
    root = manifest_path.parent
    out_dir = Path(config.out_dir)
    eval_dir = out_dir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)

    modalities = manifest.modalities()
    scores: list[tuple[str, str, float, float]] = []
    checkpoints: dict[str, str] = {"foundation": str(config.foundation_checkpoint)}

    baseline = load_segmenter("foundation", config.foundation_checkpoint,
                              patch_resolution=config.patch_resolution)
    if name == "zero_shot":
        if "Argon" not in modalities:
            raise ConfigurationError("zero_shot trains on Argon; manifest has none")
        finetuned = _train_foundation(config, manifest, root, ["Argon"],
                                      out_dir / "train_zero_shot")
        model_runs = [(LABEL_FINETUNED, finetuned), (LABEL_PRETRAINED, baseline)]
        eval_modalities = [m for m in modalities if m != "Argon"]
    else:
        finetuned = _train_foundation(config, manifest, root, None,
                                      out_dir / f"train_{name}")
        model_runs = [(LABEL_FINETUNED, finetuned), (LABEL_PRETRAINED, baseline)]
        if name == "unet_comparison":
            unet = load_segmenter("unet", patch_resolution=config.patch_resolution,
                                  seed=config.seed,
                                  base_channels=config.unet_base_channels,
                                  depth=config.unet_depth)
            _fit(unet, config, manifest, root, None, out_dir / "train_unet")
            model_runs.append((LABEL_UNET, unet))
        eval_modalities = modalities

    for modality in eval_modalities:
        for label, segmenter in model_runs:
            iou, f1 = evaluate_model(segmenter, manifest, root, modality, "test",
                                     eval_dir, label, config.cell_size)
            scores.append((modality, label, iou, f1))

    report_mod.write_scores_csv(eval_dir / report_mod.SCORES_CSV, scores)
    if name == "unet_comparison":
        table = report_mod.render_results_table(scores)
        reports_dir = out_dir / "reports"
        reports_dir.mkdir(parents=True, exist_ok=True)
        (reports_dir / "results_table.txt").write_text(table, encoding="utf-8")

    record = {
        "experiment": name,
        "manifest": str(manifest_path),
        "seed": config.seed,
        "cell_size": config.cell_size,
        "patch_resolution": config.patch_resolution,
        "box_jitter": config.box_jitter,
        "train_config": config.train_config.__dict__,
        "checkpoints": checkpoints,
        "model_digests": {label: parameter_digest(seg.named_parameters())
                          for label, seg in model_runs},
    }
    record_path = out_dir / "reports" / "run_record.json"
    record_path.parent.mkdir(parents=True, exist_ok=True)
    record_path.write_text(json.dumps(record, indent=2, sort_keys=True),
                           encoding="utf-8")
    return ExperimentResult(name=name, eval_dir=str(eval_dir), scores=scores,
                            run_record_path=str(record_path))
