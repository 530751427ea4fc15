"""Advisory capture-quality scoring for incoming photos.

Mobile captures arrive blurry, washed out, or badly framed often enough
that the serving path wants a cheap gate in front of the classifier.
The gate only reports; callers decide whether to enforce it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


@dataclass(frozen=True)
class QualityThresholds:
    min_sharpness: float = 30.0
    min_contrast: float = 10.0


@dataclass
class QualityReport:
    sharpness_score: float
    contrast_score: float
    passed: bool
    reasons: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "sharpness_score": self.sharpness_score,
            "contrast_score": self.contrast_score,
            "passed": self.passed,
            "reasons": list(self.reasons),
        }


def luminance(image: np.ndarray) -> np.ndarray:
    """Rec. 601 luminance on the 0..255 scale."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.shape[2] >= 3:
        r, g, b = image[:, :, 0], image[:, :, 1], image[:, :, 2]
        return 0.299 * r + 0.587 * g + 0.114 * b
    return image[:, :, 0]


def sharpness_score(image: np.ndarray) -> float:
    """Variance of the Laplacian response; low values flag blur."""
    lap = ndimage.convolve(luminance(image), LAPLACIAN_KERNEL, mode="reflect")
    return float(lap.var())


def contrast_score(image: np.ndarray) -> float:
    """Interquartile range of luminance; zero for flat images."""
    lum = luminance(image)
    q75, q25 = np.percentile(lum, [75, 25])
    return float(q75 - q25)


def quality_gate(image: np.ndarray, thresholds: QualityThresholds | None = None) -> QualityReport:
    """Score a decoded image; always returns a report, never raises."""
    thresholds = thresholds or QualityThresholds()
    sharp = sharpness_score(image)
    contrast = contrast_score(image)
    reasons = []
    if sharp < thresholds.min_sharpness:
        reasons.append(f"low sharpness ({sharp:.1f} < {thresholds.min_sharpness:.1f})")
    if contrast < thresholds.min_contrast:
        reasons.append(f"low contrast ({contrast:.1f} < {thresholds.min_contrast:.1f})")
    return QualityReport(
        sharpness_score=sharp,
        contrast_score=contrast,
        passed=not reasons,
        reasons=reasons,
    )
