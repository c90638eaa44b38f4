"""Fine-tuning loop: Dice + cross-entropy loss, Adam, optional mixed precision
with loss scaling, gradient clipping, per-epoch validation, plateau LR decay,
and checkpointing."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch

from .datamodel import BinaryMask
from .errors import CheckpointError, TrainingDivergedError
from .models import Segmenter
from .models.base import parameter_digest
from .models.foundation import FoundationSegmenter
from .models.unet import UNetSegmenter

DICE_EPSILON = 1e-6
BCE_CLAMP = 1e-7


@dataclass
class TrainConfig:
    learning_rate: float = 1e-5
    weight_decay: float = 0.0
    batch_size: int = 4
    epochs: int = 20
    clip_max_norm: float = 1.0
    scheduler_factor: float = 0.1
    scheduler_patience: int = 3
    scheduler_min_lr: float = 1e-8
    mixed_precision: bool = False
    seed: int = 0

    def __post_init__(self):
        # lr == 0 is allowed: a zero-step run is a useful no-op baseline
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if self.clip_max_norm <= 0:
            raise ValueError("clip_max_norm must be positive")
        if not (0.0 < self.scheduler_factor < 1.0):
            raise ValueError("scheduler_factor must lie in (0, 1)")
        if self.scheduler_patience < 1:
            raise ValueError("scheduler_patience must be >= 1")
        if self.scheduler_min_lr < 0:
            raise ValueError("scheduler_min_lr must be nonnegative")


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_iou: float
    val_precision: float
    val_recall: float
    lr: float
    checkpoint_path: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def _as_pair(probabilities, gt):
    """Normalize (probabilities, target) inputs to torch tensors of equal shape."""
    return_float = not torch.is_tensor(probabilities)
    p = probabilities if torch.is_tensor(probabilities) \
        else torch.as_tensor(np.asarray(probabilities, dtype=np.float64))
    if isinstance(gt, BinaryMask):
        gt = gt.labels
    # np.array copies: mask label buffers are read-only, which torch rejects
    g = gt if torch.is_tensor(gt) else torch.as_tensor(np.array(gt))
    g = g.to(p.dtype)
    if p.shape != g.shape:
        raise ValueError(f"probabilities {tuple(p.shape)} and target {tuple(g.shape)} "
                         "dimensions must match")
    return p, g, return_float


def dice_loss(probabilities, gt, epsilon: float = DICE_EPSILON):
    """1 - (2*sum(p*g) + eps) / (sum(p) + sum(g) + eps), in [0, 1)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    p, g, return_float = _as_pair(probabilities, gt)
    loss = 1.0 - (2.0 * (p * g).sum() + epsilon) / (p.sum() + g.sum() + epsilon)
    return float(loss) if return_float else loss


def bce_loss(probabilities, gt):
    """Mean binary cross-entropy on probabilities clamped to [1e-7, 1 - 1e-7]."""
    p, g, return_float = _as_pair(probabilities, gt)
    p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(g * p.log() + (1.0 - g) * (1.0 - p).log()).mean()
    return float(loss) if return_float else loss


def combined_loss(probabilities, gt, epsilon: float = DICE_EPSILON):
    """Unweighted sum of the Dice and cross-entropy components."""
    p, g, return_float = _as_pair(probabilities, gt)
    loss = dice_loss(p, g, epsilon) + bce_loss(p, g)
    return float(loss) if return_float else loss


def _batch_loss(probabilities: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Each component averaged over the batch, then summed."""
    flat_p = probabilities.reshape(probabilities.shape[0], -1)
    flat_g = targets.reshape(targets.shape[0], -1)
    dice = 1.0 - (2.0 * (flat_p * flat_g).sum(dim=1) + DICE_EPSILON) / (
        flat_p.sum(dim=1) + flat_g.sum(dim=1) + DICE_EPSILON)
    clamped = flat_p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = -(flat_g * clamped.log() + (1.0 - flat_g) * (1.0 - clamped).log()).mean(dim=1)
    return dice.mean() + bce.mean()


class PlateauScheduler:
    """Multiply the LR by ``factor`` after ``patience`` epochs without
    validation-loss improvement, floored at ``min_lr``."""

    def __init__(self, optimizer, factor: float, patience: int, min_lr: float):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.min_lr = min_lr
        self.best = math.inf
        self.bad_epochs = 0

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, val_loss: float) -> None:
        if val_loss < self.best:
            self.best = val_loss
            self.bad_epochs = 0
            return
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            for group in self.optimizer.param_groups:
                # floored at min_lr, but never raised above the current rate
                floor = min(self.min_lr, group["lr"])
                group["lr"] = max(group["lr"] * self.factor, floor)
            self.bad_epochs = 0


def _to_target_batch(masks) -> torch.Tensor:
    arrs = [m.labels if isinstance(m, BinaryMask) else np.asarray(m) for m in masks]
    return torch.from_numpy(np.stack(arrs).astype(np.float32))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _evaluate(segmenter: Segmenter, dataset) -> tuple[float, float, float, float]:
    """Validation loss plus pooled iou/precision/recall over the set."""
    losses = []
    tp = fp = fn = 0
    with torch.no_grad():
        for start in range(0, len(dataset), 8):
            chunk = dataset[start:start + 8]
            images = [item[0] for item in chunk]
            boxes = [item[1] for item in chunk]
            targets = _to_target_batch([item[2] for item in chunk])
            logits = segmenter.forward_logits(images, boxes)
            probs = torch.sigmoid(logits.float())
            losses.append(float(_batch_loss(probs, targets)) * len(chunk))
            pred = probs > 0.5
            gt = targets > 0.5
            tp += int((pred & gt).sum())
            fp += int((pred & ~gt).sum())
            fn += int((~pred & gt).sum())
    val_loss = sum(losses) / len(dataset)
    iou = tp / (tp + fp + fn) if tp + fp + fn else 1.0
    precision = tp / (tp + fp) if tp + fp else (1.0 if fn == 0 else 0.0)
    recall = tp / (tp + fn) if tp + fn else (1.0 if fp == 0 else 0.0)
    return val_loss, iou, precision, recall


def train(segmenter: Segmenter, train_set, val_set, config: TrainConfig,
          out_dir: str | Path | None = None) -> list[EpochLog]:
    """Fine-tune a learned backend on (patch, box, mask) triples.

    Writes per-epoch checkpoints and a JSON-Lines log under ``out_dir`` when
    given; the best-validation-loss checkpoint is symlinked as ``best.pt``.
    """
    train_set = list(train_set)
    val_set = list(val_set)
    if not train_set or not val_set:
        raise ValueError("train and validation sets must be nonempty")
    params = segmenter.trainable_parameters()
    optimizer = torch.optim.Adam(params, lr=config.learning_rate,
                                 weight_decay=config.weight_decay)
    scheduler = PlateauScheduler(optimizer, config.scheduler_factor,
                                 config.scheduler_patience, config.scheduler_min_lr)
    scaler = torch.amp.GradScaler("cpu", enabled=config.mixed_precision)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_path = ckpt_dir = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = out_dir / "train_log.jsonl"
        ckpt_dir = out_dir / "checkpoints"
        ckpt_dir.mkdir(exist_ok=True)

    logs: list[EpochLog] = []
    best_val = math.inf
    for epoch in range(1, config.epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        segmenter.set_train_mode(True)
        epoch_loss = 0.0
        for batch_index, idx in enumerate(_batches(len(train_set), config.batch_size, rng)):
            images = [train_set[i][0] for i in idx]
            boxes = [train_set[i][1] for i in idx]
            targets = _to_target_batch([train_set[i][2] for i in idx])

            optimizer.zero_grad(set_to_none=True)
            with torch.autocast("cpu", dtype=torch.bfloat16,
                                enabled=config.mixed_precision):
                logits = segmenter.forward_logits(images, boxes)
                probs = torch.sigmoid(logits.float())
                loss = _batch_loss(probs, targets)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, batch_index, scaler.get_scale())
            scaler.scale(loss).backward()
            scaler.unscale_(optimizer)
            torch.nn.utils.clip_grad_norm_(params, config.clip_max_norm)
            scaler.step(optimizer)
            scaler.update()
            epoch_loss += float(loss.detach()) * len(idx)

        train_loss = epoch_loss / len(train_set)
        segmenter.set_train_mode(False)
        val_loss, val_iou, val_precision, val_recall = _evaluate(segmenter, val_set)
        scheduler.step(val_loss)

        checkpoint_path = None
        if ckpt_dir is not None:
            checkpoint_path = str(ckpt_dir / f"epoch_{epoch}.pt")
            save_checkpoint(segmenter, checkpoint_path)
            if val_loss < best_val:
                best_val = val_loss
                link = ckpt_dir / "best.pt"
                if link.is_symlink() or link.exists():
                    link.unlink()
                os.symlink(f"epoch_{epoch}.pt", link)

        log = EpochLog(epoch=epoch, train_loss=train_loss, val_loss=val_loss,
                       val_iou=val_iou, val_precision=val_precision,
                       val_recall=val_recall, lr=scheduler.lr,
                       checkpoint_path=checkpoint_path)
        logs.append(log)
        if log_path is not None:
            with open(log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(log.to_json()) + "\n")
    return logs


def save_checkpoint(segmenter: Segmenter, path: str | Path) -> None:
    """Serialize backend type, patch resolution, weights, and a weights digest."""
    payload = segmenter.state_payload()
    bundle = {
        "backend": segmenter.backend,
        "patch_resolution": segmenter.patch_resolution,
        "weights_digest": parameter_digest(payload["state_dict"].items()),
        **payload,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(bundle, path)


def load_checkpoint(path: str | Path, expected_backend: str | None = None) -> Segmenter:
    """Rebuild a segmenter from a checkpoint; verifies the weights digest."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        bundle = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"could not read checkpoint {path}: {exc}") from exc
    for key in ("backend", "patch_resolution", "weights_digest", "state_dict"):
        if key not in bundle:
            raise CheckpointError(f"checkpoint {path} is missing field {key!r}")
    backend = bundle["backend"]
    if expected_backend is not None and backend != expected_backend:
        raise CheckpointError(
            f"checkpoint {path} holds a {backend!r} backend, expected {expected_backend!r}")
    digest = parameter_digest(bundle["state_dict"].items())
    if digest != bundle["weights_digest"]:
        raise CheckpointError(
            f"checkpoint {path} is corrupt: weights digest mismatch "
            f"(stored {bundle['weights_digest'][:12]}..., computed {digest[:12]}...)")
    resolution = int(bundle["patch_resolution"])
    if backend == "unet":
        return UNetSegmenter.from_payload(bundle, resolution)
    if backend == "foundation":
        return FoundationSegmenter.from_payload(bundle, resolution)
    raise CheckpointError(f"checkpoint backend {backend!r} cannot be restored")
