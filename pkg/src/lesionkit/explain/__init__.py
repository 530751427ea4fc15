"""Model explanation: superpixel perturbation analysis and gradient maps."""

from .segmentation import SuperpixelMap, SuperpixelParams, segment_superpixels
from .lime import LimeConfig, LimeExplanation, lime_explain
from .gradcam import GradCamHeatmap, compute_cam, gradcam_explain
from .render import render_composite, render_gradcam_overlay, render_lime_overlay, render_overlay

__all__ = [
    "SuperpixelMap",
    "SuperpixelParams",
    "segment_superpixels",
    "LimeConfig",
    "LimeExplanation",
    "lime_explain",
    "GradCamHeatmap",
    "compute_cam",
    "gradcam_explain",
    "render_composite",
    "render_gradcam_overlay",
    "render_lime_overlay",
    "render_overlay",
]
