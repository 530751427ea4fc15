"""Request/response bodies for the inference API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class PredictionEntry(BaseModel):
    label: str
    confidence: float = Field(ge=0.0, le=1.0)


class QualityInfo(BaseModel):
    passed: bool
    reasons: list[str] = []
    sharpness_score: float
    contrast_score: float


class ExplanationBundle(BaseModel):
    lime: str | None = None  # base64-encoded PNG
    gradcam: str | None = None  # base64-encoded PNG
    metadata: dict = {}


class PredictResponse(BaseModel):
    predictions: list[PredictionEntry]
    quality: QualityInfo
    model_id: str
    latency_ms: float
    explanations: ExplanationBundle | None = None
    warnings: list[str] = []


class HealthResponse(BaseModel):
    status: str  # "loading" until the artifact is resident, then "ok"
    model_id: str | None = None
    uptime_s: float
    class_count: int | None = None


class ClassesResponse(BaseModel):
    classes: list[str]


class ErrorDetail(BaseModel):
    code: str
    message: str


class ErrorResponse(BaseModel):
    error: ErrorDetail
