"""Local surrogate explanation by superpixel perturbation.

The image is partitioned into superpixels; random binary masks switch
segments off (replaced by a baseline color), the model is queried on each
perturbed image, and a locality-weighted ridge regression from mask
vectors to target-class probabilities yields one signed weight per
segment. Positive weights support the class, negative oppose it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ExplainError
from .segmentation import SuperpixelMap, SuperpixelParams, segment_superpixels


@dataclass(frozen=True)
class LimeConfig:
    num_samples: int = 1000
    kernel_width: float = 0.25
    ridge_penalty: float = 1.0
    top_k: int = 5
    baseline: tuple[int, int, int] | None = None  # None = per-segment mean color
    seed: int = 0

    def __post_init__(self):
        if self.num_samples < 1:
            raise ExplainError("num_samples must be positive")
        if self.kernel_width <= 0:
            raise ExplainError("kernel_width must be positive")
        if self.ridge_penalty < 0:
            raise ExplainError("ridge_penalty cannot be negative")
        if self.top_k < 1:
            raise ExplainError("top_k must be positive")


@dataclass
class LimeExplanation:
    segment_weights: np.ndarray  # (S,) signed reals
    intercept: float
    surrogate_r2: float
    target_class: int
    segments: SuperpixelMap
    config: LimeConfig
    masks: np.ndarray  # (n, S) uint8, row 0 is all-ones
    probabilities: np.ndarray  # (n,) target-class probability per mask
    sample_weights: np.ndarray  # (n,) locality kernel weights

    def top_segments(self, sign: int, top_k: int | None = None) -> list[int]:
        """Segment ids with the largest |weight| of the given sign."""
        k = self.config.top_k if top_k is None else top_k
        w = self.segment_weights
        ids = [i for i in np.argsort(-np.abs(w)) if np.sign(w[i]) == sign]
        return [int(i) for i in ids[:k]]

    def to_metadata(self) -> dict:
        return {
            "method": "lime",
            "target_class": self.target_class,
            "num_segments": self.segments.num_segments,
            "segment_weights": [float(v) for v in self.segment_weights],
            "intercept": float(self.intercept),
            "surrogate_r2": float(self.surrogate_r2),
            "num_samples": int(self.config.num_samples),
            "kernel_width": float(self.config.kernel_width),
            "ridge_penalty": float(self.config.ridge_penalty),
            "top_k": int(self.config.top_k),
            "seed": int(self.config.seed),
        }


def segment_baseline_image(image: np.ndarray, segments: SuperpixelMap) -> np.ndarray:
    """Image with every segment replaced by its own mean color."""
    ids = segments.segment_ids
    s = segments.num_segments
    counts = np.bincount(ids.ravel(), minlength=s).astype(np.float64)
    out = np.empty_like(image)
    means = np.stack(
        [np.bincount(ids.ravel(), weights=image[..., c].ravel(), minlength=s) for c in range(3)],
        axis=1,
    ) / counts[:, None]
    base = np.clip(np.round(means), 0, 255).astype(np.uint8)
    out[:] = base[ids]
    return out


def mask_distances(masks: np.ndarray) -> np.ndarray:
    """Cosine distance of each mask from the all-ones mask.

    Equals 1 - sqrt(kept/S); the empty mask gets the maximal distance 1.
    """
    s = masks.shape[1]
    kept = masks.sum(axis=1).astype(np.float64)
    return 1.0 - np.sqrt(kept / s)


def weighted_ridge(
    x: np.ndarray, y: np.ndarray, sample_weights: np.ndarray, penalty: float
) -> tuple[np.ndarray, float]:
    """Closed-form ridge with unpenalized intercept and per-sample weights.

    Centering uses the weighted means, so the intercept absorbs the offset
    and only the coefficients feel the penalty.
    """
    w = sample_weights.astype(np.float64)
    total = w.sum()
    if total <= 0:
        raise ExplainError("all sample weights are zero")
    x = x.astype(np.float64)
    y = y.astype(np.float64)
    x_mean = (w[:, None] * x).sum(axis=0) / total
    y_mean = float((w * y).sum() / total)
    xc = x - x_mean
    yc = y - y_mean
    a = (xc * w[:, None]).T @ xc + penalty * np.eye(x.shape[1])
    b = (xc * w[:, None]).T @ yc
    try:
        coef = np.linalg.solve(a, b)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(a, b, rcond=None)[0]
    intercept = y_mean - float(x_mean @ coef)
    return coef, intercept


def weighted_r2(
    x: np.ndarray, y: np.ndarray, sample_weights: np.ndarray, coef: np.ndarray, intercept: float
) -> float:
    w = sample_weights.astype(np.float64)
    total = w.sum()
    pred = x @ coef + intercept
    ss_res = float((w * (y - pred) ** 2).sum())
    y_mean = float((w * y).sum() / total)
    ss_tot = float((w * (y - y_mean) ** 2).sum())
    # a target constant up to rounding has no variance to explain; call the
    # fit perfect when its residuals sit at the same noise floor
    floor = total * (1e-9 * max(1.0, abs(y_mean))) ** 2
    if ss_tot <= floor:
        return 1.0 if ss_res <= floor else 0.0
    return float(np.clip(1.0 - ss_res / ss_tot, 0.0, 1.0))


def _resolve_predict_fn(model):
    if callable(model) and not hasattr(model, "predict_on_images"):
        return model
    return model.predict_on_images


def lime_explain(
    model,
    image: np.ndarray,
    target_class: int,
    config: LimeConfig | None = None,
    segments: SuperpixelMap | None = None,
    segment_params: SuperpixelParams | None = None,
    batch_size: int = 32,
) -> LimeExplanation:
    """Explain one prediction with a locality-weighted linear surrogate.

    ``model`` is either a classifier exposing ``predict_on_images`` or a
    bare callable mapping a list of uint8 RGB images to (B, K) probabilities.
    """
    if config is None:
        config = LimeConfig()
    predict_fn = _resolve_predict_fn(model)
    if segments is None:
        segments = segment_superpixels(image, segment_params)
    if segments.shape != image.shape[:2]:
        raise ExplainError("segmentation does not match image dimensions")
    s = segments.num_segments
    if s == 0:
        raise ExplainError("segmentation produced no segments")
    if config.num_samples < s:
        raise ExplainError(
            f"num_samples ({config.num_samples}) must be at least the segment count ({s})"
        )

    rng = np.random.default_rng(config.seed)
    masks = rng.integers(0, 2, size=(config.num_samples, s), dtype=np.uint8)
    masks[0, :] = 1  # the unperturbed image anchors the fit

    if config.baseline is None:
        baseline_img = segment_baseline_image(image, segments)
    else:
        baseline_img = np.empty_like(image)
        baseline_img[:] = np.asarray(config.baseline, dtype=np.uint8)

    ids = segments.segment_ids
    probs = np.empty(config.num_samples, dtype=np.float64)
    for start in range(0, config.num_samples, batch_size):
        chunk = masks[start : start + batch_size]
        batch = [
            np.where(mask[ids][..., None].astype(bool), image, baseline_img) for mask in chunk
        ]
        try:
            out = np.asarray(predict_fn(batch))
        except Exception as exc:
            raise ExplainError(f"model query failed during perturbation: {exc}") from exc
        if out.ndim != 2 or out.shape[0] != len(batch):
            raise ExplainError(f"predict_fn returned unexpected shape {out.shape}")
        if not 0 <= target_class < out.shape[1]:
            raise ExplainError(f"target class {target_class} out of range")
        probs[start : start + len(batch)] = out[:, target_class]

    distances = mask_distances(masks)
    sample_weights = np.exp(-(distances**2) / config.kernel_width**2)
    coef, intercept = weighted_ridge(masks, probs, sample_weights, config.ridge_penalty)
    r2 = weighted_r2(masks, probs, sample_weights, coef, intercept)
    return LimeExplanation(
        segment_weights=coef,
        intercept=intercept,
        surrogate_r2=r2,
        target_class=target_class,
        segments=segments,
        config=config,
        masks=masks,
        probabilities=probs,
        sample_weights=sample_weights,
    )
