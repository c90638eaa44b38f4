"""Core domain types: modalities, frames, masks, boxes, grid geometry, metric
reports, and the JSON-Lines dataset manifest.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ManifestParseError

MODALITY_NAMES = ("Argon", "Nitrogen", "FC72", "Water")
SPLITS = ("train", "val", "test")


class Condition(Enum):
    """Boiling regime: saturated pool boiling or flow boiling."""

    SPB = "SPB"
    FB = "FB"


@dataclass(frozen=True)
class Modality:
    """One high-speed-video acquisition campaign (fluid + conditions)."""

    name: str
    condition: Condition
    heat_flux_kw_m2: float
    frame_count: int
    mass_flux_kg_m2s: float | None = None

    def __post_init__(self):
        if self.name not in MODALITY_NAMES:
            raise ValueError(f"unknown modality name {self.name!r}")
        if self.heat_flux_kw_m2 <= 0:
            raise ValueError("heat_flux must be positive")
        if self.frame_count <= 0:
            raise ValueError("frame_count must be positive")
        if (self.condition is Condition.FB) != (self.mass_flux_kg_m2s is not None):
            raise ValueError("mass_flux is present iff condition is FB")


#: Acquisition metadata for the four campaign fluids.
HSV_MODALITIES: dict[str, Modality] = {
    "Argon": Modality("Argon", Condition.SPB, 120.0, 6000),
    "Nitrogen": Modality("Nitrogen", Condition.SPB, 120.0, 6000),
    "FC72": Modality("FC72", Condition.SPB, 170.0, 6000),
    "Water": Modality("Water", Condition.FB, 3000.0, 7500, mass_flux_kg_m2s=500.0),
}


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Frame:
    """A single grayscale frame with intensities normalized to [0, 1]."""

    pixels: np.ndarray
    modality: str = "unknown"
    frame_index: int = 0

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float32)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"frame pixels must be a nonempty 2-D array, got shape {px.shape}")
        lo, hi = float(px.min()), float(px.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"frame intensities must lie in [0, 1], got [{lo}, {hi}]")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """Per-pixel phase labels over {0, 1}, aligned to a Frame."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2 or lab.shape[0] < 1 or lab.shape[1] < 1:
            raise ValueError(f"mask labels must be a nonempty 2-D array, got shape {lab.shape}")
        lab = lab.astype(np.uint8, copy=True) if lab.dtype != np.uint8 else lab.copy()
        if not np.isin(lab, (0, 1)).all():
            raise ValueError("mask values must be exactly 0 or 1")
        object.__setattr__(self, "labels", _freeze(lab))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def foreground_count(self) -> int:
        return int(self.labels.sum())


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned pixel box, inclusive-min / exclusive-max."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError("box coordinates must be nonnegative")
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("box must have positive width and height")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    def as_xyxy(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class GridGeometry:
    """Cell layout used to decompose a frame and to stitch it back."""

    cell_size: int
    rows: int
    cols: int
    padded_height: int
    padded_width: int
    original_height: int
    original_width: int

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError("cell_size must be >= 1")
        if self.padded_height != self.rows * self.cell_size:
            raise ValueError("padded_height must equal rows * cell_size")
        if self.padded_width != self.cols * self.cell_size:
            raise ValueError("padded_width must equal cols * cell_size")
        for padded, original in ((self.padded_height, self.original_height),
                                 (self.padded_width, self.original_width)):
            if original < 1:
                raise ValueError("original dimensions must be >= 1")
            if padded < original or padded - self.cell_size >= original:
                raise ValueError("padded dims must be the smallest cell multiple >= original")

    @classmethod
    def for_size(cls, height: int, width: int, cell_size: int) -> "GridGeometry":
        rows = math.ceil(height / cell_size)
        cols = math.ceil(width / cell_size)
        return cls(cell_size, rows, cols, rows * cell_size, cols * cell_size, height, width)


_SCORE_NAMES = ("iou", "f1", "precision", "recall", "accuracy", "specificity", "dice")


@dataclass(frozen=True)
class MetricsReport:
    """Pixel confusion counts and the derived scores for one frame or patch."""

    tp: int
    fp: int
    fn: int
    tn: int
    iou: float
    f1: float
    precision: float
    recall: float
    accuracy: float
    specificity: float
    dice: float

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be nonnegative")
        if self.total == 0:
            raise ValueError("report must cover at least one pixel")
        if self.dice != self.f1:
            raise ValueError("dice and f1 must be identical for binary masks")
        for name in _SCORE_NAMES:
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def score(self, metric_name: str) -> float:
        if metric_name not in _SCORE_NAMES:
            raise ValueError(f"unknown metric {metric_name!r}")
        return float(getattr(self, metric_name))


@dataclass(frozen=True)
class AggregateStats:
    """Distribution summary of one score over a set of reports."""

    metric_name: str
    mean: float
    min: float
    max: float
    std: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("aggregate needs at least one report")
        if self.std < 0:
            raise ValueError("std must be nonnegative")
        if not (self.min <= self.mean <= self.max):
            raise ValueError("mean must lie between min and max")


@dataclass(frozen=True)
class ManifestEntry:
    """One frame/mask pair with its split assignment."""

    frame_path: str
    mask_path: str
    modality: str
    split: str
    frame_index: int
    reference_path: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")

    def to_json(self) -> dict:
        record = {
            "frame": self.frame_path,
            "mask": self.mask_path,
            "modality": self.modality,
            "split": self.split,
            "index": self.frame_index,
        }
        if self.reference_path is not None:
            record["reference"] = self.reference_path
        return record

    @classmethod
    def from_json(cls, record: dict) -> "ManifestEntry":
        return cls(
            frame_path=record["frame"],
            mask_path=record["mask"],
            modality=record["modality"],
            split=record["split"],
            frame_index=int(record["index"]),
            reference_path=record.get("reference"),
        )


@dataclass(frozen=True)
class DatasetManifest:
    """Declarative listing of frame/mask pairs, modality, and split assignment."""

    entries: tuple[ManifestEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self) -> int:
        return len(self.entries)

    def filter(self, split: str | None = None, modality: str | None = None) -> "DatasetManifest":
        kept = [e for e in self.entries
                if (split is None or e.split == split)
                and (modality is None or e.modality == modality)]
        return DatasetManifest(tuple(kept))

    def modalities(self) -> list[str]:
        seen: dict[str, None] = {}
        for entry in self.entries:
            seen.setdefault(entry.modality, None)
        return list(seen)

    def write_jsonl(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries:
                fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "DatasetManifest":
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    entries.append(ManifestEntry.from_json(record))
                except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                    raise ManifestParseError(f"{path}: line {lineno}: {exc}") from exc
        return cls(tuple(entries))


@dataclass(frozen=True)
class Violation:
    """One manifest-consistency failure."""

    kind: str
    detail: str
    entry_index: int | None = None


#: validate_manifest returns a list of Violation records; empty means valid.
ValidationReport = list


def validate_manifest(manifest: DatasetManifest, root: str | Path = ".") -> ValidationReport:
    """Check file existence, frame/mask dimension agreement, and split uniqueness.

    ``root`` resolves relative manifest paths. Returns an empty list iff the
    manifest is valid.
    """
    from . import imgio  # deferred: imgio pulls in cv2

    root = Path(root)
    violations: list[Violation] = []
    split_membership: dict[str, set[str]] = {}

    for i, entry in enumerate(manifest.entries):
        split_membership.setdefault(entry.frame_path, set()).add(entry.split)
        shapes = {}
        for role, rel in (("frame", entry.frame_path), ("mask", entry.mask_path)):
            path = root / rel
            if not path.exists():
                violations.append(Violation("missing-file", f"{role} {rel} does not exist", i))
                continue
            try:
                shapes[role] = imgio.read_gray(path).shape[:2]
            except Exception as exc:
                violations.append(Violation("decode-error", f"{role} {rel}: {exc}", i))
        if entry.reference_path is not None and not (root / entry.reference_path).exists():
            violations.append(
                Violation("missing-file", f"reference {entry.reference_path} does not exist", i))
        if "frame" in shapes and "mask" in shapes and shapes["frame"] != shapes["mask"]:
            violations.append(Violation(
                "dimension-mismatch",
                f"frame {shapes['frame']} vs mask {shapes['mask']} for {entry.frame_path}", i))

    for path, splits in split_membership.items():
        if len(splits) > 1:
            violations.append(Violation(
                "duplicate-split", f"{path} listed under splits {sorted(splits)}", None))

    return violations
