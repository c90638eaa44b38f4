"""Seeded synthetic bubble-frame generator standing in for the camera dataset.

Presets mirror the qualitative split between gas-like scenes (many complex
overlapping bubbles) and water-like scenes (few bubbles, noisy background).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .datamodel import BinaryMask, DatasetManifest, Frame, ManifestEntry
from .preprocess import ReferenceFrame
from . import imgio

MIN_DIMENSION = 32

#: Default modality -> preset mapping for the four campaign fluids.
DEFAULT_MODALITY_PRESETS = {
    "Argon": "gas_like",
    "Nitrogen": "gas_like",
    "FC72": "gas_like",
    "Water": "water_like",
}

SPLIT_FRACTIONS = {"train": 0.8, "val": 0.1}  # remainder is test


@dataclass(frozen=True)
class SynthPreset:
    """Bubble-field statistics for one scene style."""

    name: str
    bubble_count_range: tuple[int, int]
    radius_range: tuple[float, float]
    ellipticity_range: tuple[float, float]
    overlap_allowed: bool
    background_noise_sigma: float
    foreground_intensity: float
    background_intensity: float

    def __post_init__(self):
        for lo, hi in (self.bubble_count_range, self.radius_range, self.ellipticity_range):
            if lo > hi:
                raise ValueError("preset ranges must be nonempty (lo <= hi)")
        if self.bubble_count_range[0] < 1:
            raise ValueError("bubble count must be at least 1")
        if self.radius_range[0] <= 0:
            raise ValueError("radii must be positive")
        if not (0.0 < self.ellipticity_range[0] <= self.ellipticity_range[1] <= 1.0):
            raise ValueError("ellipticity must lie in (0, 1]")
        if self.background_noise_sigma < 0:
            raise ValueError("noise sigma must be nonnegative")
        for level in (self.foreground_intensity, self.background_intensity):
            if not (0.0 <= level <= 1.0):
                raise ValueError("intensity levels must lie in [0, 1]")
        if self.foreground_intensity == self.background_intensity:
            raise ValueError("intensity levels must be distinct")


PRESETS = {
    "gas_like": SynthPreset(
        name="gas_like",
        bubble_count_range=(15, 40),
        radius_range=(4.0, 20.0),
        ellipticity_range=(0.5, 1.0),
        overlap_allowed=True,
        background_noise_sigma=0.0,
        foreground_intensity=0.8,
        background_intensity=0.2,
    ),
    "water_like": SynthPreset(
        name="water_like",
        bubble_count_range=(1, 5),
        radius_range=(10.0, 40.0),
        ellipticity_range=(0.6, 1.0),
        overlap_allowed=False,
        background_noise_sigma=0.08,
        foreground_intensity=0.8,
        background_intensity=0.2,
    ),
}


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


def frame_seed(seed: int, modality: str, index: int) -> np.random.SeedSequence:
    """Per-frame seed derived from (seed, modality, index); parallel generation
    order cannot change outputs."""
    return np.random.SeedSequence([int(seed), stable_hash(modality), int(index)])


def _ellipse_mask(height: int, width: int, cx: float, cy: float,
                  a: float, b: float, theta: float) -> np.ndarray:
    ys, xs = np.mgrid[0:height, 0:width]
    dx = xs - cx
    dy = ys - cy
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    u = dx * cos_t + dy * sin_t
    v = -dx * sin_t + dy * cos_t
    return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0


def generate_frame(seed, preset: SynthPreset, height: int,
                   width: int) -> tuple[Frame, BinaryMask, ReferenceFrame]:
    """Draw a bubble field: filled ellipses at the foreground intensity over a
    constant background, plus optional Gaussian noise.

    Deterministic in (seed, preset, dims). The mask is the exact union of the
    ellipse interiors sampled at integer pixel coordinates; the reference is
    the noise-free background.
    """
    if height < MIN_DIMENSION or width < MIN_DIMENSION:
        raise ValueError(f"dims must be at least {MIN_DIMENSION}, got {height}x{width}")
    rng = np.random.default_rng(seed)
    count = int(rng.integers(preset.bubble_count_range[0], preset.bubble_count_range[1] + 1))

    mask = np.zeros((height, width), dtype=bool)
    placed: list[tuple[float, float, float]] = []
    for _ in range(count):
        for _attempt in range(100):
            cx = float(rng.uniform(0, width))
            cy = float(rng.uniform(0, height))
            a = float(rng.uniform(*preset.radius_range))
            b = a * float(rng.uniform(*preset.ellipticity_range))
            theta = float(rng.uniform(0, np.pi))
            if preset.overlap_allowed or all(
                    (cx - px) ** 2 + (cy - py) ** 2 > (a + pr) ** 2
                    for px, py, pr in placed):
                mask |= _ellipse_mask(height, width, cx, cy, a, b, theta)
                placed.append((cx, cy, a))
                break
        # unplaceable bubble (no non-overlapping spot): skip it

    fg, bg = preset.foreground_intensity, preset.background_intensity
    pixels = np.where(mask, fg, bg).astype(np.float64)
    if preset.background_noise_sigma > 0:
        pixels = pixels + rng.normal(0.0, preset.background_noise_sigma, size=pixels.shape)
    pixels = np.clip(pixels, 0.0, 1.0)

    frame = Frame(pixels, frame_index=0)
    reference = ReferenceFrame(np.full((height, width), bg, dtype=np.float32))
    return frame, BinaryMask(mask.astype(np.uint8)), reference


def split_counts(n: int) -> dict[str, int]:
    """80/10/10 split with integer truncation; the remainder goes to test."""
    n_train = int(n * SPLIT_FRACTIONS["train"])
    n_val = int(n * SPLIT_FRACTIONS["val"])
    return {"train": n_train, "val": n_val, "test": n - n_train - n_val}


def assign_splits(n: int, rng: np.random.Generator) -> list[str]:
    """Shuffle indices and hand out splits per the split policy."""
    counts = split_counts(n)
    order = rng.permutation(n)
    assignment = [""] * n
    cursor = 0
    for split in ("train", "val", "test"):
        for i in order[cursor:cursor + counts[split]]:
            assignment[int(i)] = split
        cursor += counts[split]
    return assignment


def generate_dataset(seed: int, out_dir: str | Path,
                     presets_per_modality: dict[str, str] | None = None,
                     frames_per_modality: int = 10,
                     height: int = 300, width: int = 300,
                     noise_sigma: float | None = None) -> DatasetManifest:
    """Write frames, masks, and references for each modality plus a manifest.

    ``noise_sigma`` overrides every preset's noise level when given. Frames
    are 16-bit PNG, masks 8-bit PNG, and all outputs are bit-reproducible
    for a fixed seed.
    """
    out_dir = Path(out_dir)
    presets_per_modality = dict(presets_per_modality or DEFAULT_MODALITY_PRESETS)
    entries = []
    for modality, preset_name in presets_per_modality.items():
        preset = PRESETS[preset_name]
        if noise_sigma is not None:
            preset = replace(preset, background_noise_sigma=noise_sigma)

        ref_rel = f"{modality}/reference.png"
        reference_written = False
        split_rng = np.random.default_rng([int(seed), stable_hash(modality), 0x5B11])
        splits = assign_splits(frames_per_modality, split_rng)

        for index in range(frames_per_modality):
            frame, mask, reference = generate_frame(
                frame_seed(seed, modality, index), preset, height, width)
            if not reference_written:
                imgio.write_gray16_png(out_dir / ref_rel, reference.pixels)
                reference_written = True
            frame_rel = f"{modality}/frames/frame_{index:05d}.png"
            mask_rel = f"{modality}/masks/frame_{index:05d}.png"
            imgio.write_gray16_png(out_dir / frame_rel, frame.pixels)
            imgio.write_mask_png(out_dir / mask_rel, mask)
            entries.append(ManifestEntry(
                frame_path=frame_rel, mask_path=mask_rel, modality=modality,
                split=splits[index], frame_index=index, reference_path=ref_rel))

    manifest = DatasetManifest(tuple(entries))
    manifest.write_jsonl(out_dir / "manifest.jsonl")
    return manifest
