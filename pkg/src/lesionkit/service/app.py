"""FastAPI application serving predictions and explanation overlays.

The model is immutable after load, so plain predictions run concurrently
from the request thread pool. Explanations register hooks on the shared
module and issue many model queries, so they serialize behind one lock;
a failed explanation degrades the response to prediction-plus-warning.
"""

from __future__ import annotations

import base64
import io
import threading
import time
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Query, Request, UploadFile
from fastapi.exceptions import RequestValidationError
from fastapi.responses import HTMLResponse, JSONResponse
from PIL import Image, UnidentifiedImageError

from ..checkpoint import checkpoint_model_id, load_checkpoint
from ..errors import LesionKitError
from ..explain.gradcam import gradcam_explain
from ..explain.lime import LimeConfig, lime_explain
from ..explain.render import render_gradcam_overlay, render_lime_overlay
from ..explain.segmentation import SuperpixelParams, segment_superpixels
from ..model import ClassifierModel
from ..quality import quality_gate
from .schemas import (
    ClassesResponse,
    ExplanationBundle,
    HealthResponse,
    PredictionEntry,
    PredictResponse,
    QualityInfo,
)

EXPLAIN_CHOICES = ("none", "lime", "gradcam", "both")


@dataclass(frozen=True)
class ServiceSettings:
    artifact_path: str = ""
    host: str = "127.0.0.1"
    port: int = 8000
    upload_limit_bytes: int = 10 * 1024 * 1024
    explain_budget: int = 400  # LIME perturbation cap per request
    explain_seed: int = 0
    explain_max_side: int = 256  # working resolution for explanations
    lime_segments: int = 50


@dataclass
class ServingState:
    model: ClassifierModel
    model_id: str
    loaded_at: float = field(default_factory=time.time)


def load_artifact(path: str) -> ServingState:
    """Make an artifact resident for serving; raises on any corruption."""
    model = load_checkpoint(path)
    model.module.eval()
    return ServingState(model=model, model_id=checkpoint_model_id(path))


def _error_json(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": {"code": code, "message": message}})


def _decode_upload(data: bytes) -> np.ndarray:
    try:
        with Image.open(io.BytesIO(data)) as img:
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise HTTPException(status_code=400, detail="not a decodable image") from exc


def _png_base64(image: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def _working_copy(image: np.ndarray, max_side: int) -> np.ndarray:
    h, w = image.shape[:2]
    side = max(h, w)
    if side <= max_side:
        return image
    scale = max_side / side
    new_w, new_h = max(1, round(w * scale)), max(1, round(h * scale))
    return np.asarray(Image.fromarray(image).resize((new_w, new_h), Image.BILINEAR))


def _to_upload_size(overlay: np.ndarray, height: int, width: int) -> np.ndarray:
    if overlay.shape[:2] == (height, width):
        return overlay
    return np.asarray(Image.fromarray(overlay).resize((width, height), Image.BILINEAR))


def create_app(settings: ServiceSettings, state: ServingState | None = None) -> FastAPI:
    """Build the service; when ``state`` is None the artifact loads on startup."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if app.state.serving is None and settings.artifact_path:
            app.state.serving = load_artifact(settings.artifact_path)
        yield

    app = FastAPI(
        title="lesion classification service", docs_url=None, redoc_url=None, lifespan=lifespan
    )
    app.state.settings = settings
    app.state.serving = state
    app.state.started = time.time()
    app.state.explain_lock = threading.Lock()

    @app.exception_handler(HTTPException)
    async def http_error(_req: Request, exc: HTTPException):
        codes = {
            400: "bad_request",
            404: "not_found",
            413: "payload_too_large",
            422: "validation_error",
            503: "loading",
        }
        return _error_json(exc.status_code, codes.get(exc.status_code, "error"), str(exc.detail))

    @app.exception_handler(RequestValidationError)
    async def validation_error(_req: Request, exc: RequestValidationError):
        return _error_json(422, "validation_error", str(exc.errors()[:1]))

    @app.exception_handler(Exception)
    async def internal_error(_req: Request, exc: Exception):
        return _error_json(500, "internal_error", f"{type(exc).__name__}: {exc}")

    def serving_or_503() -> ServingState:
        serving = app.state.serving
        if serving is None:
            raise HTTPException(status_code=503, detail="model is still loading")
        return serving

    @app.get("/health", response_model=HealthResponse, response_model_exclude_none=True)
    def health() -> HealthResponse:
        serving = app.state.serving
        uptime = time.time() - app.state.started
        if serving is None:
            return HealthResponse(status="loading", uptime_s=uptime)
        return HealthResponse(
            status="ok",
            model_id=serving.model_id,
            uptime_s=uptime,
            class_count=serving.model.num_classes,
        )

    @app.get("/classes", response_model=ClassesResponse)
    def classes() -> ClassesResponse:
        serving = serving_or_503()
        return ClassesResponse(classes=list(serving.model.class_names))

    def _explain(
        serving: ServingState, image: np.ndarray, target: int, which: str
    ) -> ExplanationBundle:
        h, w = image.shape[:2]
        work = _working_copy(image, settings.explain_max_side)
        bundle = ExplanationBundle(metadata={"seed": settings.explain_seed, "target_class": target})
        with app.state.explain_lock:
            if which in ("lime", "both"):
                segments = segment_superpixels(
                    work, SuperpixelParams(target_segments=settings.lime_segments)
                )
                num_samples = max(segments.num_segments, min(1000, settings.explain_budget))
                config = LimeConfig(num_samples=num_samples, seed=settings.explain_seed)
                explanation = lime_explain(
                    serving.model, work, target, config, segments=segments
                )
                overlay = render_lime_overlay(work, explanation)
                bundle.lime = _png_base64(_to_upload_size(overlay, h, w))
                bundle.metadata["lime"] = {
                    "surrogate_r2": explanation.surrogate_r2,
                    "num_segments": segments.num_segments,
                    "num_samples": num_samples,
                    "top_k": config.top_k,
                }
            if which in ("gradcam", "both"):
                heatmap = gradcam_explain(serving.model, work, target)
                overlay = render_gradcam_overlay(work, heatmap)
                bundle.gradcam = _png_base64(_to_upload_size(overlay, h, w))
                bundle.metadata["gradcam"] = {
                    "source_layer": heatmap.source_layer,
                    "all_zero": heatmap.all_zero,
                }
        return bundle

    @app.post("/predict", response_model=PredictResponse, response_model_exclude_none=True)
    def predict(
        image: UploadFile,
        top_k: int = Query(default=3, ge=1),
        explain: str = Query(default="none"),
    ) -> PredictResponse:
        serving = serving_or_503()
        if explain not in EXPLAIN_CHOICES:
            raise HTTPException(
                status_code=422, detail=f"explain must be one of {', '.join(EXPLAIN_CHOICES)}"
            )
        started = time.perf_counter()
        data = image.file.read(settings.upload_limit_bytes + 1)
        if len(data) > settings.upload_limit_bytes:
            raise HTTPException(
                status_code=413,
                detail=f"upload exceeds the {settings.upload_limit_bytes} byte limit",
            )
        decoded = _decode_upload(data)

        quality = quality_gate(decoded)
        warnings = [f"image quality: {r}" for r in quality.reasons]

        probs = serving.model.predict_on_images([decoded])[0]
        order = np.argsort(-probs, kind="stable")
        k = min(top_k, serving.model.num_classes)
        predictions = [
            PredictionEntry(
                label=serving.model.class_names[i], confidence=float(np.clip(probs[i], 0.0, 1.0))
            )
            for i in order[:k]
        ]

        explanations = None
        if explain != "none":
            try:
                explanations = _explain(serving, decoded, int(order[0]), explain)
            except Exception as exc:  # never let an explanation kill the prediction
                warnings.append(f"explanation failed: {exc}")

        return PredictResponse(
            predictions=predictions,
            quality=QualityInfo(**quality.to_dict()),
            model_id=serving.model_id,
            latency_ms=(time.perf_counter() - started) * 1000.0,
            explanations=explanations,
            warnings=warnings,
        )

    @app.get("/", response_class=HTMLResponse, include_in_schema=False)
    def index() -> str:
        return _FALLBACK_PAGE

    return app


_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>lesion classifier</title>
<style>body{font-family:sans-serif;max-width:40em;margin:2em auto}img{max-width:100%}
pre{background:#f4f4f4;padding:1em;overflow:auto}</style></head>
<body>
<h1>Lesion classifier</h1>
<p>Upload a photo to get class probabilities and explanation overlays.
The structured API lives at <code>POST /predict</code>.</p>
<form id="f"><input type="file" name="image" accept="image/*" required>
<select name="explain"><option>none</option><option>lime</option>
<option>gradcam</option><option>both</option></select>
<button>Predict</button></form>
<pre id="out"></pre><div id="imgs"></div>
<script>
document.getElementById('f').addEventListener('submit', async (e) => {
  e.preventDefault();
  const fd = new FormData(e.target);
  const explain = fd.get('explain'); fd.delete('explain');
  const res = await fetch('/predict?explain=' + explain, {method: 'POST', body: fd});
  const body = await res.json();
  const imgs = document.getElementById('imgs'); imgs.innerHTML = '';
  if (body.explanations) {
    for (const key of ['lime', 'gradcam']) {
      if (body.explanations[key]) {
        const im = new Image(); im.src = 'data:image/png;base64,' + body.explanations[key];
        imgs.appendChild(im);
      }
    }
    delete body.explanations.lime; delete body.explanations.gradcam;
  }
  document.getElementById('out').textContent = JSON.stringify(body, null, 2);
});
</script></body></html>
"""
