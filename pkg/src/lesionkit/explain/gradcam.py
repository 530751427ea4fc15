"""Gradient-weighted class activation maps.

Channel weights are the spatial means of the target logit's gradient at a
spatial layer; the map is the ReLU of the weighted activation sum,
bilinearly upsampled to the image and normalized by its maximum. A map
that is zero everywhere stays zero and is flagged rather than rescaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from ..errors import ExplainError
from ..preprocess import preprocess_image


@dataclass
class GradCamHeatmap:
    map: np.ndarray  # (H, W) float32 in [0, 1]
    source_layer: str
    target_class: int
    all_zero: bool = False

    def to_metadata(self) -> dict:
        return {
            "method": "gradcam",
            "target_class": self.target_class,
            "source_layer": self.source_layer,
            "all_zero": self.all_zero,
            "map_max": float(self.map.max()) if self.map.size else 0.0,
        }


def compute_cam(activations: np.ndarray, gradients: np.ndarray) -> np.ndarray:
    """Raw class activation map from one layer's (H', W', C) tensors."""
    if activations.ndim != 3 or gradients.shape != activations.shape:
        raise ExplainError(
            f"activations {activations.shape} and gradients {gradients.shape} must be matching (H, W, C)"
        )
    if activations.shape[0] == 0 or activations.shape[1] == 0:
        raise ExplainError("zero-size activation map")
    alphas = gradients.mean(axis=(0, 1))  # (C,)
    cam = (activations * alphas).sum(axis=2)
    return np.maximum(cam, 0.0)


def upsample_bilinear(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    if arr.shape == (height, width):
        return arr.astype(np.float32)
    img = Image.fromarray(arr.astype(np.float32), mode="F")
    return np.asarray(img.resize((width, height), Image.BILINEAR), dtype=np.float32)


def normalize_cam(raw: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scale to [0, 1] by the max; an all-zero map is returned as-is."""
    peak = float(raw.max(initial=0.0))
    if peak <= 0.0:
        return np.zeros_like(raw, dtype=np.float32), True
    return (raw / peak).astype(np.float32), False


def gradcam_explain(model, image: np.ndarray, target_class: int, layer: str | None = None) -> GradCamHeatmap:
    """Heatmap over a decoded uint8 RGB image for one class.

    ``layer`` defaults to the backbone's declared feature layer; any layer
    whose output the model can arrange spatially is accepted.
    """
    pre = preprocess_image(image, model.preprocess)
    activations, gradients = model.activations_and_gradients(pre, target_class, layer)
    raw = compute_cam(activations, gradients)
    upsampled = upsample_bilinear(raw, image.shape[0], image.shape[1])
    normalized, all_zero = normalize_cam(upsampled)
    layer_name = layer if layer is not None else model.adapter.feature_layer
    return GradCamHeatmap(
        map=normalized, source_layer=layer_name, target_class=target_class, all_zero=all_zero
    )
