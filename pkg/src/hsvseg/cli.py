"""Command-line entry point: dataset preparation, synthetic generation,
training, inference, evaluation, experiments, and report rendering.

Exit codes: 0 success, 1 validation error, 2 runtime failure. Configuration
precedence: CLI flag > config file > built-in default.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import imgio, report as report_mod, synthdata
from .datamodel import DatasetManifest, ManifestEntry, validate_manifest
from .errors import ConfigurationError, ManifestParseError
from .experiments import (EXPERIMENTS, ExperimentConfig, build_patch_dataset,
                          evaluate_model, load_pairs, run_experiment)
from .inference import segment_frame
from .models import DEFAULT_FOUNDATION_REF, load_segmenter
from .preprocess import ReferenceFrame, binarize_mask, subtract_reference, to_grayscale
from .training import TrainConfig, train

IMAGE_SUFFIXES = (".png", ".tif", ".tiff")


def _read_config_file(path: str) -> dict[str, str]:
    """Flat key-value text: one `key = value` per line, `#` comments."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}: line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_file(subparser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Seed a subcommand's defaults from --config before the real parse."""
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    file_values = _read_config_file(known.config)
    actions = {action.dest: action for action in subparser._actions}
    unknown = set(file_values) - set(actions)
    if unknown:
        raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
    converted = {}
    for dest, raw in file_values.items():
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            converted[dest] = raw.lower() in ("1", "true", "yes")
        elif action.type is not None:
            converted[dest] = action.type(raw)
        else:
            converted[dest] = raw
    subparser.set_defaults(**converted)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value config file")
    parser.add_argument("--dry-run", action="store_true",
                        help="validate inputs and print the plan without side effects")


def _add_train_config_flags(parser: argparse.ArgumentParser) -> None:
    defaults = TrainConfig()
    parser.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    parser.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    parser.add_argument("--batch-size", type=int, default=defaults.batch_size)
    parser.add_argument("--epochs", type=int, default=defaults.epochs)
    parser.add_argument("--clip-max-norm", type=float, default=defaults.clip_max_norm)
    parser.add_argument("--scheduler-factor", type=float, default=defaults.scheduler_factor)
    parser.add_argument("--scheduler-patience", type=int, default=defaults.scheduler_patience)
    parser.add_argument("--scheduler-min-lr", type=float, default=defaults.scheduler_min_lr)
    parser.add_argument("--mixed-precision", action="store_true")
    parser.add_argument("--seed", type=int, default=defaults.seed)


def _train_config_from_args(args) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate, weight_decay=args.weight_decay,
        batch_size=args.batch_size, epochs=args.epochs,
        clip_max_norm=args.clip_max_norm, scheduler_factor=args.scheduler_factor,
        scheduler_patience=args.scheduler_patience,
        scheduler_min_lr=args.scheduler_min_lr,
        mixed_precision=args.mixed_precision, seed=args.seed)


def _parse_preset_overrides(pairs: list[str]) -> dict[str, str]:
    presets = dict(synthdata.DEFAULT_MODALITY_PRESETS)
    for pair in pairs or []:
        if "=" not in pair:
            raise ConfigurationError(f"--preset expects MODALITY=NAME, got {pair!r}")
        modality, name = pair.split("=", 1)
        if name not in synthdata.PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}")
        presets[modality] = name
    return presets


# ---------------------------------------------------------------------------
# subcommand handlers


def cmd_synth(args) -> int:
    presets = _parse_preset_overrides(args.preset)
    if args.dry_run:
        print(f"plan: generate {args.frames_per_modality} frames x "
              f"{len(presets)} modalities ({presets}) at "
              f"{args.height}x{args.width}, seed {args.seed}, into {args.out}")
        return 0
    manifest = synthdata.generate_dataset(
        seed=args.seed, out_dir=args.out, presets_per_modality=presets,
        frames_per_modality=args.frames_per_modality,
        height=args.height, width=args.width, noise_sigma=args.noise_sigma)
    print(f"wrote {len(manifest)} entries to {Path(args.out) / 'manifest.jsonl'}")
    return 0


def _pair_raw_files(modality_dir: Path) -> tuple[list[tuple[Path, Path]], list[str]]:
    frames_dir = modality_dir / "frames"
    masks_dir = modality_dir / "masks"
    pairs, errors = [], []
    if not frames_dir.is_dir():
        return pairs, [f"{modality_dir.name}: no frames/ directory"]
    for frame_path in sorted(frames_dir.iterdir()):
        if frame_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        for suffix in IMAGE_SUFFIXES:
            mask_path = masks_dir / (frame_path.stem + suffix)
            if mask_path.exists():
                pairs.append((frame_path, mask_path))
                break
        else:
            errors.append(f"{modality_dir.name}/{frame_path.name}: no matching mask")
    return pairs, errors


def cmd_prepare(args) -> int:
    raw_dir = Path(args.raw_dir)
    if not raw_dir.is_dir():
        raise ConfigurationError(f"raw dir {raw_dir} does not exist")
    out_dir = Path(args.out)
    manifest_path = out_dir / "manifests" / "manifest.jsonl"

    modality_dirs = sorted(p for p in raw_dir.iterdir() if p.is_dir())
    plan = []
    all_errors: list[str] = []
    for mdir in modality_dirs:
        pairs, errors = _pair_raw_files(mdir)
        all_errors.extend(errors)
        plan.append((mdir, pairs))
    if args.dry_run:
        for mdir, pairs in plan:
            print(f"plan: {mdir.name}: {len(pairs)} frame/mask pairs")
        for err in all_errors:
            print(f"excluded: {err}")
        print(f"plan: split seed {args.split_seed}, manifest -> {manifest_path}")
        return 0

    entries = []
    for mdir, pairs in plan:
        modality = mdir.name
        reference = None
        ref_path = mdir / "reference.png"
        if ref_path.exists():
            reference = ReferenceFrame(
                to_grayscale(imgio.read_gray(ref_path)).pixels, modality=modality)
        rng = np.random.default_rng([args.split_seed,
                                     synthdata.stable_hash(modality)])
        splits = synthdata.assign_splits(len(pairs), rng)
        for index, (frame_path, mask_path) in enumerate(pairs):
            frame = to_grayscale(imgio.read_gray(frame_path), modality=modality,
                                 frame_index=index)
            if reference is not None:
                frame = subtract_reference(frame, reference)
            mask = binarize_mask(imgio.read_gray(mask_path))
            frame_rel = f"data/{modality}/frames/frame_{index:05d}.png"
            mask_rel = f"data/{modality}/masks/frame_{index:05d}.png"
            imgio.write_gray16_png(out_dir / frame_rel, frame.pixels)
            imgio.write_mask_png(out_dir / mask_rel, mask)
            entries.append(ManifestEntry(
                frame_path=f"../{frame_rel}", mask_path=f"../{mask_rel}",
                modality=modality, split=splits[index], frame_index=index))

    manifest = DatasetManifest(tuple(entries))
    manifest.write_jsonl(manifest_path)
    for err in all_errors:
        print(f"excluded: {err}")
    print(f"wrote {len(manifest)} entries to {manifest_path}")
    return 0


def _load_manifest_checked(path: str) -> tuple[DatasetManifest, Path]:
    manifest_path = Path(path)
    if not manifest_path.exists():
        raise ConfigurationError(f"manifest {manifest_path} does not exist")
    manifest = DatasetManifest.read_jsonl(manifest_path)
    return manifest, manifest_path.parent


def cmd_train(args) -> int:
    manifest, root = _load_manifest_checked(args.manifest)
    config = _train_config_from_args(args)
    modalities = args.modalities.split(",") if args.modalities else None
    if args.dry_run:
        n_train = len(manifest.filter("train").entries)
        print(f"plan: train {args.backend} on {n_train} frames "
              f"(modalities {modalities or 'all'}), {config.epochs} epochs, "
              f"lr {config.learning_rate}, out {args.out}")
        return 0
    segmenter = load_segmenter(args.backend, _checkpoint_ref(args),
                               patch_resolution=args.patch_res, seed=config.seed,
                               **_unet_options(args))
    train_pairs = load_pairs(manifest, root, "train", modalities)
    val_pairs = load_pairs(manifest, root, "val", modalities)
    if not train_pairs or not val_pairs:
        raise ConfigurationError("manifest has no train or no val frames")
    # a restored checkpoint fixes its own patch resolution
    resolution = segmenter.patch_resolution
    train_set = build_patch_dataset(train_pairs, args.cell_size, resolution,
                                    args.jitter, config.seed)
    val_set = build_patch_dataset(val_pairs, args.cell_size, resolution,
                                  0, config.seed + 1)
    logs = train(segmenter, train_set, val_set, config, out_dir=Path(args.out))
    for log in logs:
        print(f"epoch {log.epoch}: train {log.train_loss:.4f} "
              f"val {log.val_loss:.4f} iou {log.val_iou:.4f} lr {log.lr:.2e}")
    return 0


def _unet_options(args) -> dict:
    if args.backend == "unet":
        return {"base_channels": args.unet_base_channels, "depth": args.unet_depth}
    return {}


def _checkpoint_ref(args) -> str | None:
    """Foundation runs fall back to the pretrained registry identifier."""
    if args.checkpoint is None and args.backend == "foundation":
        return DEFAULT_FOUNDATION_REF
    return args.checkpoint


def _entries_for(manifest: DatasetManifest, split: str, modalities) -> list[ManifestEntry]:
    return [e for e in manifest.entries
            if (split == "all" or e.split == split)
            and (modalities is None or e.modality in modalities)]


def cmd_infer(args) -> int:
    manifest, root = _load_manifest_checked(args.manifest)
    modalities = args.modalities.split(",") if args.modalities else None
    entries = _entries_for(manifest, args.split, modalities)
    if not entries:
        raise ConfigurationError(f"no entries in split {args.split!r}")
    if args.dry_run:
        print(f"plan: segment {len(entries)} frames with {args.backend} "
              f"(proposal: {args.proposal_backend or 'none'}) -> {args.out}")
        return 0
    segmenter = load_segmenter(args.backend, _checkpoint_ref(args),
                               patch_resolution=args.patch_res,
                               **_unet_options(args))
    proposal = None
    if args.proposal_backend:
        proposal = load_segmenter(args.proposal_backend, args.proposal_checkpoint,
                                  patch_resolution=args.patch_res)
    mask_dir = Path(args.out) / "eval" / "masks"
    for entry in entries:
        frame, _ = imgio.load_entry(entry, root)
        mask = segment_frame(segmenter, frame, cell_size=args.cell_size,
                             proposal_segmenter=proposal)
        out_path = mask_dir / entry.modality / f"mask_{entry.frame_index:05d}.png"
        imgio.write_mask_png(out_path, mask)
    print(f"wrote {len(entries)} masks under {mask_dir}")
    return 0


def cmd_eval(args) -> int:
    manifest, root = _load_manifest_checked(args.manifest)
    modalities = args.modalities.split(",") if args.modalities else manifest.modalities()
    if args.dry_run:
        n = len(_entries_for(manifest, args.split, modalities))
        print(f"plan: evaluate {args.backend} on {n} frames "
              f"({args.split} split of {modalities}) -> {args.out}")
        return 0
    segmenter = load_segmenter(args.backend, _checkpoint_ref(args),
                               patch_resolution=args.patch_res,
                               **_unet_options(args))
    eval_dir = Path(args.out) / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    scores = []
    for modality in modalities:
        iou, f1 = evaluate_model(segmenter, manifest, root, modality, args.split,
                                 eval_dir, args.backend, args.cell_size)
        scores.append((modality, args.backend, iou, f1))
        print(f"{modality}: mean iou {iou:.4f}, mean f1 {f1:.4f}")
    report_mod.write_scores_csv(eval_dir / report_mod.SCORES_CSV, scores)
    return 0


def cmd_experiment(args) -> int:
    config = ExperimentConfig(
        manifest_path=args.manifest, out_dir=args.out,
        foundation_checkpoint=args.foundation_checkpoint,
        train_config=_train_config_from_args(args),
        cell_size=args.cell_size, patch_resolution=args.patch_res,
        box_jitter=args.jitter, unet_base_channels=args.unet_base_channels,
        unet_depth=args.unet_depth, seed=args.seed)
    if args.dry_run:
        manifest, _ = _load_manifest_checked(args.manifest)
        print(f"plan: experiment {args.exp} over {len(manifest)} manifest entries, "
              f"epochs {config.train_config.epochs}, out {args.out}")
        return 0
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock_path = out_dir / ".lock"
    try:
        lock_fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigurationError(
            f"{lock_path} exists: another experiment is using this output directory")
    try:
        result = run_experiment(args.exp, config)
    finally:
        os.close(lock_fd)
        lock_path.unlink(missing_ok=True)
    for fluid, model, iou, f1 in result.scores:
        print(f"{fluid:>10s} {model:<16s} iou {iou:.4f} f1 {f1:.4f}")
    print(f"run record: {result.run_record_path}")
    return 0


def cmd_report(args) -> int:
    if args.dry_run:
        print(f"plan: render table and box plots from {args.results_dir} -> {args.out}")
        return 0
    outputs = report_mod.report(args.results_dir, Path(args.out) / "reports")
    for kind, paths in outputs.items():
        for path in paths:
            print(f"{kind}: {path}")
    return 0


def cmd_validate(args) -> int:
    manifest, root = _load_manifest_checked(args.manifest)
    violations = validate_manifest(manifest, root)
    for v in violations:
        where = f"entry {v.entry_index}" if v.entry_index is not None else "manifest"
        print(f"{v.kind} ({where}): {v.detail}")
    if violations:
        raise ConfigurationError(f"{len(violations)} manifest violations")
    print(f"manifest ok: {len(manifest)} entries")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsvseg",
        description="High-speed-video phase-detection segmentation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic bubble dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--frames-per-modality", type=int, default=10)
    p.add_argument("--height", type=int, default=300)
    p.add_argument("--width", type=int, default=300)
    p.add_argument("--noise-sigma", type=float, default=None,
                   help="override every preset's background noise sigma")
    p.add_argument("--preset", action="append", metavar="MODALITY=NAME",
                   help="override the preset for one modality (repeatable)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="preprocess a raw directory tree into a manifest")
    _add_common(p)
    p.add_argument("--raw-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("validate", help="check a manifest for violations")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="fine-tune a learned backend")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("foundation", "unet"), default="foundation")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--modalities", default=None, help="comma-separated filter")
    p.add_argument("--cell-size", type=int, default=100)
    p.add_argument("--patch-res", type=int, default=256)
    p.add_argument("--jitter", type=int, default=5)
    p.add_argument("--unet-base-channels", type=int, default=64)
    p.add_argument("--unet-depth", type=int, default=4)
    _add_train_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="segment frames and write mask PNGs")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("foundation", "unet", "threshold"),
                   default="threshold")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--modalities", default=None)
    p.add_argument("--cell-size", type=int, default=100)
    p.add_argument("--patch-res", type=int, default=256)
    p.add_argument("--unet-base-channels", type=int, default=64)
    p.add_argument("--unet-depth", type=int, default=4)
    p.add_argument("--proposal-backend", choices=("unet",), default=None,
                   help="two-stage mode: proposal masks define prompt boxes")
    p.add_argument("--proposal-checkpoint", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="segment and score frames against ground truth")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=("foundation", "unet", "threshold"),
                   default="threshold")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--split", default="test", choices=("train", "val", "test", "all"))
    p.add_argument("--modalities", default=None)
    p.add_argument("--cell-size", type=int, default=100)
    p.add_argument("--patch-res", type=int, default=256)
    p.add_argument("--unet-base-channels", type=int, default=64)
    p.add_argument("--unet-depth", type=int, default=4)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run one of the three campaigns")
    _add_common(p)
    p.add_argument("--exp", choices=EXPERIMENTS, required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--foundation-checkpoint", default=None)
    p.add_argument("--cell-size", type=int, default=100)
    p.add_argument("--patch-res", type=int, default=256)
    p.add_argument("--jitter", type=int, default=5)
    p.add_argument("--unet-base-channels", type=int, default=64)
    p.add_argument("--unet-depth", type=int, default=4)
    _add_train_config_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("report", help="render tables and box plots from stored CSVs")
    _add_common(p)
    p.add_argument("--results-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        sub_action = next(a for a in parser._actions
                          if isinstance(a, argparse._SubParsersAction))
        if argv and argv[0] in sub_action.choices:
            _apply_config_file(sub_action.choices[argv[0]], argv[1:])
        args = parser.parse_args(argv)
        return args.func(args)
    except (ConfigurationError, ManifestParseError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
