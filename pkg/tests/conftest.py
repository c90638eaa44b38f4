import numpy as np
import pytest

from hsvseg.datamodel import BinaryMask, BoundingBox
from hsvseg.models import build_miniature_foundation
from hsvseg.training import save_checkpoint


def random_mask(rng: np.random.Generator, height: int, width: int,
                density: float = 0.3) -> BinaryMask:
    return BinaryMask((rng.random((height, width)) < density).astype(np.uint8))


def two_level_patch(mask: np.ndarray, fg: float = 0.8, bg: float = 0.2) -> np.ndarray:
    return np.where(mask > 0, fg, bg).astype(np.float32)


@pytest.fixture(scope="session")
def tiny_foundation_checkpoint(tmp_path_factory) -> str:
    """A small promptable checkpoint built offline (random weights)."""
    seg = build_miniature_foundation(seed=7, patch_resolution=256)
    path = tmp_path_factory.mktemp("ckpt") / "tiny_foundation.pt"
    save_checkpoint(seg, path)
    return str(path)


@pytest.fixture()
def patch_triples():
    """Synthetic (image, box, mask) triples at 256 resolution."""
    rng = np.random.default_rng(11)
    triples = []
    for _ in range(6):
        mask = random_mask(rng, 256, 256, density=0.2)
        triples.append((two_level_patch(mask.labels),
                        BoundingBox(0, 0, 256, 256), mask))
    return triples
