"""Image decoding and normalization ahead of the classifier."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DatasetError

# ImageNet channel statistics, matching the pretrained backbone weights.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class PreprocessSpec:
    """Target geometry and channel normalization for one backbone."""

    target_size: int = 224
    channel_means: tuple[float, float, float] = IMAGENET_MEAN
    channel_stds: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.target_size < 1:
            raise DatasetError("target_size must be positive")
        if len(self.channel_means) != 3 or len(self.channel_stds) != 3:
            raise DatasetError("channel stats must have 3 entries")
        if any(s <= 0 for s in self.channel_stds):
            raise DatasetError("channel stds must be positive")

    def to_dict(self) -> dict:
        return {
            "target_size": self.target_size,
            "channel_means": list(self.channel_means),
            "channel_stds": list(self.channel_stds),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreprocessSpec":
        return cls(
            target_size=int(d["target_size"]),
            channel_means=tuple(d["channel_means"]),
            channel_stds=tuple(d["channel_stds"]),
        )


def load_image(path: str | Path) -> np.ndarray:
    """Decode an image file to a uint8 array (H, W) or (H, W, C)."""
    try:
        with Image.open(path) as img:
            return np.asarray(img)
    except Exception as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def _to_rgb(image: np.ndarray) -> np.ndarray:
    """Coerce to 3 channels: replicate grayscale, drop alpha."""
    if image.ndim == 2:
        image = image[:, :, None]
    if image.ndim != 3:
        raise DatasetError(f"expected 2D or 3D pixel array, got shape {image.shape}")
    channels = image.shape[2]
    if channels == 1:
        return np.repeat(image, 3, axis=2)
    if channels == 3:
        return image
    if channels == 4:
        return image[:, :, :3]
    raise DatasetError(f"unsupported channel count {channels}")


def _resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[0] == size and image.shape[1] == size:
        return image.astype(np.float32)
    if image.dtype == np.uint8:
        pil = Image.fromarray(image, mode="RGB")
        return np.asarray(pil.resize((size, size), Image.BILINEAR), dtype=np.float32)
    # Float input: resize channel-wise to avoid quantizing through uint8.
    out = np.empty((size, size, 3), dtype=np.float32)
    for c in range(3):
        band = Image.fromarray(image[:, :, c].astype(np.float32), mode="F")
        out[:, :, c] = np.asarray(band.resize((size, size), Image.BILINEAR))
    return out


def preprocess_image(image: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Resize to a square and normalize channels to the given statistics.

    Input is a decoded pixel array on the 0..255 scale with 1, 3, or 4
    channels; output is float32 (target_size, target_size, 3) with each
    channel mapped through (x/255 - mean) / std.
    """
    image = np.asarray(image)
    if image.size == 0 or image.ndim < 2 or image.shape[0] == 0 or image.shape[1] == 0:
        raise DatasetError("degenerate image: zero area")
    rgb = _to_rgb(image)
    resized = _resize_bilinear(rgb, spec.target_size)
    mean = np.asarray(spec.channel_means, dtype=np.float32)
    std = np.asarray(spec.channel_stds, dtype=np.float32)
    return ((resized / 255.0 - mean) / std).astype(np.float32)


def denormalize_image(tensor: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Invert the normalization back to the 0..255 pixel scale."""
    mean = np.asarray(spec.channel_means, dtype=np.float32)
    std = np.asarray(spec.channel_stds, dtype=np.float32)
    return (tensor * std + mean) * 255.0
