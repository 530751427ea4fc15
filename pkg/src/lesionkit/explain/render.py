"""Overlay rendering for explanations.

Conventions: supporting superpixels tint green and opposing ones red;
heatmaps map through a blue-to-red colormap whose blend strength scales
with heat, so cold regions show the untouched photo. All outputs are
uint8 arrays with pure-integer determinism for golden-image tests.
"""

from __future__ import annotations

import numpy as np

from ..errors import ExplainError
from .gradcam import GradCamHeatmap
from .lime import LimeExplanation

GREEN = np.array([0, 200, 80], dtype=np.float64)
RED = np.array([220, 40, 40], dtype=np.float64)

# piecewise-linear blue -> cyan -> yellow -> red
_CMAP_STOPS = np.array([0.0, 1 / 3, 2 / 3, 1.0])
_CMAP_COLORS = np.array(
    [[0, 0, 255], [0, 255, 255], [255, 255, 0], [255, 0, 0]], dtype=np.float64
)


def colormap_blue_red(values: np.ndarray) -> np.ndarray:
    """Map [0, 1] values to (., 3) uint8 colors along a blue->red ramp."""
    v = np.clip(values, 0.0, 1.0)
    channels = [np.interp(v, _CMAP_STOPS, _CMAP_COLORS[:, c]) for c in range(3)]
    return np.round(np.stack(channels, axis=-1)).astype(np.uint8)


def render_lime_overlay(
    image: np.ndarray, explanation: LimeExplanation, top_k: int | None = None, alpha: float = 0.45
) -> np.ndarray:
    if explanation.segments.shape != image.shape[:2]:
        raise ExplainError("explanation does not match image dimensions")
    ids = explanation.segments.segment_ids
    out = image.astype(np.float64)
    for sign, color in ((1, GREEN), (-1, RED)):
        for seg in explanation.top_segments(sign, top_k):
            mask = ids == seg
            out[mask] = (1.0 - alpha) * out[mask] + alpha * color
    return np.round(np.clip(out, 0, 255)).astype(np.uint8)


def render_gradcam_overlay(
    image: np.ndarray, heatmap: GradCamHeatmap, alpha: float = 0.5
) -> np.ndarray:
    if heatmap.map.shape != image.shape[:2]:
        raise ExplainError("heatmap does not match image dimensions")
    v = np.clip(heatmap.map, 0.0, 1.0)[..., None]
    colors = colormap_blue_red(heatmap.map).astype(np.float64)
    blend = alpha * v  # zero heat leaves the pixel untouched
    out = image.astype(np.float64) * (1.0 - blend) + colors * blend
    return np.round(np.clip(out, 0, 255)).astype(np.uint8)


def render_composite(image: np.ndarray, heatmap: GradCamHeatmap, gutter: int = 8) -> np.ndarray:
    """original | colorized heatmap | overlay, separated by white gutters."""
    if heatmap.map.shape != image.shape[:2]:
        raise ExplainError("heatmap does not match image dimensions")
    h, w = image.shape[:2]
    panels = [image, colormap_blue_red(heatmap.map), render_gradcam_overlay(image, heatmap)]
    out = np.full((h, 3 * w + 2 * gutter, 3), 255, dtype=np.uint8)
    for i, panel in enumerate(panels):
        x0 = i * (w + gutter)
        out[:, x0 : x0 + w] = panel
    return out


def render_overlay(image: np.ndarray, explanation, mode: str) -> np.ndarray:
    """Dispatching renderer: mode is one of lime, gradcam, composite."""
    if mode == "lime":
        if not isinstance(explanation, LimeExplanation):
            raise ExplainError("lime mode needs a LimeExplanation")
        return render_lime_overlay(image, explanation)
    if mode == "gradcam":
        if not isinstance(explanation, GradCamHeatmap):
            raise ExplainError("gradcam mode needs a GradCamHeatmap")
        return render_gradcam_overlay(image, explanation)
    if mode == "composite":
        if not isinstance(explanation, GradCamHeatmap):
            raise ExplainError("composite mode needs a GradCamHeatmap")
        return render_composite(image, explanation)
    raise ExplainError(f"unknown render mode {mode!r}")
