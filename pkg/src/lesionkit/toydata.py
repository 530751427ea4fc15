"""Synthetic color-shapes dataset for end-to-end exercises.

Three classes, each tied to one dominant hue: a saturated shape on a
weakly tinted noisy background. Global average pooling makes the hue
signal nearly position-invariant, so a frozen backbone plus a small head
separates the classes within a few epochs. Useful for pipeline tests and
demos without any clinical data.
"""

from __future__ import annotations

import colorsys
import os

import numpy as np
from PIL import Image, ImageDraw

from .dataset import ClassTaxonomy, DatasetManifest, ingest_directory

TOY_CLASSES = ("cobalt", "jade", "ruby")
_HUES = {"ruby": 0.0, "jade": 140.0, "cobalt": 225.0}


def _hsv(h_deg: float, s: float, v: float) -> tuple[int, int, int]:
    r, g, b = colorsys.hsv_to_rgb((h_deg % 360.0) / 360.0, s, v)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def _draw_sample(rng: np.random.Generator, size: int, hue: float) -> Image.Image:
    # background: gray pulled a little toward the class hue
    base = _hsv(hue + rng.uniform(-8, 8), 0.22, rng.uniform(0.4, 0.62))
    img = Image.new("RGB", (size, size), base)
    draw = ImageDraw.Draw(img)

    fill = _hsv(hue + rng.uniform(-10, 10), rng.uniform(0.8, 1.0), rng.uniform(0.75, 1.0))
    extent = rng.uniform(0.5, 0.8) * size
    cx = rng.uniform(0.3, 0.7) * size
    cy = rng.uniform(0.3, 0.7) * size
    box = [cx - extent / 2, cy - extent / 2, cx + extent / 2, cy + extent / 2]
    kind = rng.integers(0, 3)
    if kind == 0:
        draw.ellipse(box, fill=fill)
    elif kind == 1:
        draw.rectangle(box, fill=fill)
    else:
        draw.polygon(
            [(cx, cy - extent / 2), (cx - extent / 2, cy + extent / 2), (cx + extent / 2, cy + extent / 2)],
            fill=fill,
        )

    arr = np.asarray(img).astype(np.int16)
    noise = rng.integers(-10, 11, arr.shape, dtype=np.int16)
    return Image.fromarray(np.clip(arr + noise, 0, 255).astype(np.uint8))


def make_toy_dataset(
    root: str,
    num_per_class: int = 100,
    image_size: int = 96,
    seed: int = 0,
) -> DatasetManifest:
    """Write the PNG corpus under ``root`` and ingest it into a manifest."""
    for class_idx, name in enumerate(TOY_CLASSES):
        class_dir = os.path.join(root, name)
        os.makedirs(class_dir, exist_ok=True)
        for i in range(num_per_class):
            rng = np.random.default_rng([seed, class_idx, i])
            img = _draw_sample(rng, image_size, _HUES[name])
            img.save(os.path.join(class_dir, f"{name}_{i:03d}.png"))
    taxonomy = ClassTaxonomy(classes=TOY_CLASSES)
    return ingest_directory(root, taxonomy)
