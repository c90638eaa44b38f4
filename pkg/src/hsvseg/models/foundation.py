"""Promptable foundation backend: pretrained image/prompt encoders (frozen)
plus a trainable mask decoder, prompted with bounding boxes."""

from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..datamodel import BoundingBox
from .base import PatchPrediction, Segmenter, parameter_digest

#: Registry identifier used when no local checkpoint is supplied.
DEFAULT_FOUNDATION_REF = "facebook/sam-vit-base"

# ImageNet statistics on the 0-255 scale, the pretrained backbone's convention.
_PIXEL_MEAN = torch.tensor([123.675, 116.28, 103.53]).view(1, 3, 1, 1)
_PIXEL_STD = torch.tensor([58.395, 57.12, 57.375]).view(1, 3, 1, 1)

_DECODER_PREFIX = "mask_decoder"


def _load_sam_model(ref: str):
    from transformers import SamModel

    return SamModel.from_pretrained(ref)


class FoundationSegmenter(Segmenter):
    """Box-prompted segmenter with frozen encoders and a trainable decoder.

    Patches in [0, 1] grayscale are replicated to three channels, rescaled to
    the backbone's input resolution, and normalized; box prompts are mapped
    into the same coordinate frame. Decoder logits are resampled back to the
    patch resolution.
    """

    backend = "foundation"

    def __init__(self, model, patch_resolution: int = 256, source: str = "",
                 multimask: bool = False):
        super().__init__(patch_resolution)
        self.model = model
        self.source = source
        self.multimask = multimask
        self.input_size = int(model.config.vision_config.image_size)
        for name, param in self.model.named_parameters():
            param.requires_grad = name.startswith(_DECODER_PREFIX)
        self.model.eval()
        if not self.frozen_parameters():
            raise ValueError("foundation backend must have frozen encoder parameters")
        if not self.trainable_parameters():
            raise ValueError("foundation backend must have a trainable decoder")

    @classmethod
    def from_reference(cls, ref: str, patch_resolution: int = 256,
                       multimask: bool = False) -> "FoundationSegmenter":
        model = _load_sam_model(ref)
        return cls(model, patch_resolution=patch_resolution, source=ref,
                   multimask=multimask)

    # -- parameter partition -------------------------------------------------

    def trainable_parameters(self):
        return [p for p in self.model.parameters() if p.requires_grad]

    def frozen_parameters(self):
        return [p for p in self.model.parameters() if not p.requires_grad]

    def named_parameters(self):
        return list(self.model.named_parameters())

    def encoder_digest(self) -> str:
        """Digest over every frozen (encoder-side) weight."""
        return parameter_digest(
            (n, p) for n, p in self.model.named_parameters()
            if not n.startswith(_DECODER_PREFIX))

    # -- forward paths -------------------------------------------------------

    def _preprocess(self, images) -> torch.Tensor:
        stack = np.stack([np.asarray(img, dtype=np.float32) for img in images])
        x = torch.from_numpy(stack).unsqueeze(1).repeat(1, 3, 1, 1) * 255.0
        x = (x - _PIXEL_MEAN) / _PIXEL_STD
        if x.shape[-1] != self.input_size:
            x = F.interpolate(x, size=(self.input_size, self.input_size),
                              mode="bilinear", align_corners=False)
        return x

    def _prompt_boxes(self, boxes, count: int) -> torch.Tensor:
        scale = self.input_size / self.patch_resolution
        full = BoundingBox(0, 0, self.patch_resolution, self.patch_resolution)
        coords = [(box or full).as_xyxy() for box in boxes] if boxes is not None \
            else [full.as_xyxy()] * count
        arr = torch.tensor(coords, dtype=torch.float32) * scale
        return arr.unsqueeze(1)  # (batch, boxes_per_image=1, 4)

    def forward_logits(self, images, boxes=None) -> torch.Tensor:
        pixel_values = self._preprocess(images)
        input_boxes = self._prompt_boxes(boxes, len(pixel_values))
        outputs = self.model(pixel_values=pixel_values, input_boxes=input_boxes,
                             multimask_output=self.multimask)
        masks = outputs.pred_masks[:, 0]           # (batch, num_masks, h, w)
        if self.multimask:
            scores = outputs.iou_scores[:, 0]       # (batch, num_masks)
            best = scores.argmax(dim=1)
            masks = masks[torch.arange(masks.shape[0]), best].unsqueeze(1)
        logits = F.interpolate(masks[:, :1], size=(self.patch_resolution,) * 2,
                               mode="bilinear", align_corners=False)
        return logits[:, 0]

    def predict(self, image: np.ndarray, box: BoundingBox | None = None) -> PatchPrediction:
        image = self._check_patch(image, box)
        self.model.eval()
        with torch.no_grad():
            logits = self.forward_logits([image], [box])[0]
        return PatchPrediction.from_logits(logits.numpy())

    # -- checkpointing ------------------------------------------------------

    def state_payload(self) -> dict:
        return {
            "state_dict": {k: v.cpu() for k, v in self.model.state_dict().items()},
            "model_config": {
                "sam_config": self.model.config.to_dict(),
                "multimask": self.multimask,
            },
        }

    @classmethod
    def from_payload(cls, payload: dict, patch_resolution: int) -> "FoundationSegmenter":
        from transformers import SamConfig, SamModel

        cfg = payload["model_config"]
        model = SamModel(SamConfig.from_dict(cfg["sam_config"]))
        model.load_state_dict(payload["state_dict"])
        return cls(model, patch_resolution=patch_resolution,
                   multimask=cfg.get("multimask", False))


def build_miniature_foundation(seed: int = 0, patch_resolution: int = 256,
                               input_size: int = 256) -> FoundationSegmenter:
    """Randomly initialized, structurally faithful miniature of the promptable
    backbone. Small enough for CPU tests; no network access needed."""
    from transformers import SamConfig, SamModel
    from transformers.models.sam.configuration_sam import (
        SamMaskDecoderConfig, SamPromptEncoderConfig, SamVisionConfig)

    embed = 32
    vision = SamVisionConfig(
        hidden_size=24, intermediate_size=48, num_hidden_layers=2,
        num_attention_heads=2, image_size=input_size, patch_size=16,
        output_channels=embed, global_attn_indexes=[1], num_pos_feats=embed // 2)
    grid = input_size // 16
    prompt = SamPromptEncoderConfig(hidden_size=embed, image_embedding_size=grid,
                                    image_size=input_size)
    decoder = SamMaskDecoderConfig(hidden_size=embed, num_attention_heads=2,
                                   iou_head_hidden_dim=embed, mlp_dim=2 * embed)
    config = SamConfig(vision_config=vision.to_dict(),
                       prompt_encoder_config=prompt.to_dict(),
                       mask_decoder_config=decoder.to_dict())
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        model = SamModel(config)
    return FoundationSegmenter(model, patch_resolution=patch_resolution,
                               source=f"miniature(seed={seed})")
