"""U-Net baseline: encoder/decoder CNN with skip connections, single-logit output."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from ..datamodel import BoundingBox
from .base import PatchPrediction, Segmenter


class _DoubleConv(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(in_ch, out_ch, 3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.block(x)


class UNet(nn.Module):
    """Classic U-Net with configurable depth and base width."""

    def __init__(self, in_channels: int = 1, base_channels: int = 64, depth: int = 4):
        super().__init__()
        self.depth = depth
        self.encoders = nn.ModuleList()
        self.pool = nn.MaxPool2d(2)
        ch = in_channels
        widths = [base_channels * (2 ** i) for i in range(depth)]
        for w in widths:
            self.encoders.append(_DoubleConv(ch, w))
            ch = w
        self.bottleneck = _DoubleConv(ch, ch * 2)
        ch *= 2
        self.upsamplers = nn.ModuleList()
        self.decoders = nn.ModuleList()
        for w in reversed(widths):
            self.upsamplers.append(nn.ConvTranspose2d(ch, w, kernel_size=2, stride=2))
            self.decoders.append(_DoubleConv(2 * w, w))
            ch = w
        self.head = nn.Conv2d(ch, 1, kernel_size=1)

    def forward(self, x):
        skips = []
        for enc in self.encoders:
            x = enc(x)
            skips.append(x)
            x = self.pool(x)
        x = self.bottleneck(x)
        for up, dec, skip in zip(self.upsamplers, self.decoders, reversed(skips)):
            x = up(x)
            x = dec(torch.cat([x, skip], dim=1))
        return self.head(x)


class UNetSegmenter(Segmenter):
    """U-Net backend; every parameter is trainable and the box prompt is ignored."""

    backend = "unet"

    def __init__(self, patch_resolution: int = 256, base_channels: int = 64,
                 depth: int = 4, seed: int = 0):
        super().__init__(patch_resolution)
        if patch_resolution % (2 ** depth) != 0:
            raise ValueError(
                f"patch_resolution {patch_resolution} must be divisible by 2^{depth}")
        self.base_channels = base_channels
        self.depth = depth
        # Seeded construction without touching the global RNG stream.
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.model = UNet(1, base_channels, depth)
        self.model.eval()

    def _to_batch(self, images) -> torch.Tensor:
        stack = np.stack([np.asarray(img, dtype=np.float32) for img in images])
        return torch.from_numpy(stack).unsqueeze(1)

    def forward_logits(self, images, boxes=None) -> torch.Tensor:
        return self.model(self._to_batch(images)).squeeze(1)

    def set_train_mode(self, training: bool) -> None:
        self.model.train(training)

    def predict(self, image: np.ndarray, box: BoundingBox | None = None) -> PatchPrediction:
        image = self._check_patch(image, box)
        self.model.eval()
        with torch.no_grad():
            logits = self.forward_logits([image])[0]
        return PatchPrediction.from_logits(logits.numpy())

    def trainable_parameters(self):
        return [p for p in self.model.parameters() if p.requires_grad]

    def named_parameters(self):
        return list(self.model.named_parameters())

    def state_payload(self) -> dict:
        return {
            "state_dict": {k: v.cpu() for k, v in self.model.state_dict().items()},
            "model_config": {"base_channels": self.base_channels, "depth": self.depth},
        }

    @classmethod
    def from_payload(cls, payload: dict, patch_resolution: int) -> "UNetSegmenter":
        cfg = payload["model_config"]
        seg = cls(patch_resolution=patch_resolution, base_channels=cfg["base_channels"],
                  depth=cfg["depth"])
        seg.model.load_state_dict(payload["state_dict"])
        seg.model.eval()
        return seg
