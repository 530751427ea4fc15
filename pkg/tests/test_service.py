"""HTTP service contract: health, classes, predictions, explanations."""

import base64
import io
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from lesionkit.errors import ArtifactError
from lesionkit.service.app import ServiceSettings, create_app, load_artifact
from lesionkit.toydata import TOY_CLASSES


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(image).save(buf, format="PNG")
    return buf.getvalue()


def upload(data: bytes, name="photo.png", mime="image/png"):
    return {"image": (name, io.BytesIO(data), mime)}


def noisy_image(h=96, w=96, seed=0):
    return np.random.default_rng(seed).integers(0, 256, size=(h, w, 3), dtype=np.uint8)


@pytest.fixture(scope="module")
def service(toy_checkpoint):
    settings = ServiceSettings(
        artifact_path=toy_checkpoint,
        upload_limit_bytes=512 * 1024,
        explain_budget=64,
        explain_max_side=96,
        lime_segments=12,
        explain_seed=7,
    )
    app = create_app(settings, state=load_artifact(toy_checkpoint))
    with TestClient(app) as client:
        yield client


class TestLifecycle:
    def test_loading_before_artifact_resident(self):
        app = create_app(ServiceSettings(artifact_path=""), state=None)
        with TestClient(app) as client:
            health = client.get("/health").json()
            assert health["status"] == "loading"
            assert "model_id" not in health
            assert health["uptime_s"] >= 0
            res = client.get("/classes")
            assert res.status_code == 503
            assert res.json()["error"]["code"] == "loading"
            res = client.post("/predict", files=upload(png_bytes(noisy_image())))
            assert res.status_code == 503

    def test_lifespan_loads_artifact(self, toy_checkpoint):
        from lesionkit.checkpoint import checkpoint_model_id

        app = create_app(ServiceSettings(artifact_path=toy_checkpoint), state=None)
        with TestClient(app) as client:
            health = client.get("/health").json()
            assert health["status"] == "ok"
            assert health["model_id"] == checkpoint_model_id(toy_checkpoint)
            assert health["class_count"] == len(TOY_CLASSES)

    def test_load_artifact_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError, match="no artifact at"):
            load_artifact(str(tmp_path / "absent.lkpt"))


class TestClasses:
    def test_returns_taxonomy_order(self, service):
        res = service.get("/classes")
        assert res.status_code == 200
        assert res.json() == {"classes": list(TOY_CLASSES)}


class TestPredict:
    def test_response_contract(self, service, toy_checkpoint):
        from lesionkit.checkpoint import checkpoint_model_id

        res = service.post("/predict", files=upload(png_bytes(noisy_image(seed=1))))
        assert res.status_code == 200
        body = res.json()
        preds = body["predictions"]
        assert len(preds) == min(3, len(TOY_CLASSES))
        assert all(p["label"] in TOY_CLASSES for p in preds)
        confs = [p["confidence"] for p in preds]
        assert all(0.0 <= c <= 1.0 for c in confs)
        assert confs == sorted(confs, reverse=True)
        assert body["model_id"] == checkpoint_model_id(toy_checkpoint)
        assert body["latency_ms"] >= 0.0
        assert isinstance(body["quality"]["passed"], bool)
        assert "explanations" not in body  # default explain=none

    def test_top_k_clamped_to_class_count(self, service):
        data = png_bytes(noisy_image(seed=2))
        assert len(service.post("/predict?top_k=99", files=upload(data)).json()["predictions"]) == len(TOY_CLASSES)
        assert len(service.post("/predict?top_k=1", files=upload(data)).json()["predictions"]) == 1

    def test_top_k_zero_is_validation_error(self, service):
        res = service.post("/predict?top_k=0", files=upload(png_bytes(noisy_image())))
        assert res.status_code == 422
        assert res.json()["error"]["code"] == "validation_error"

    def test_quality_warnings_are_advisory(self, service):
        flat = np.full((64, 64, 3), 128, dtype=np.uint8)
        res = service.post("/predict", files=upload(png_bytes(flat)))
        assert res.status_code == 200  # still classified
        body = res.json()
        assert body["quality"]["passed"] is False
        assert body["quality"]["reasons"]
        assert any(w.startswith("image quality:") for w in body["warnings"])

    def test_sharp_image_passes_quality(self, service):
        res = service.post("/predict", files=upload(png_bytes(noisy_image(seed=3))))
        body = res.json()
        assert body["quality"]["passed"] is True
        assert body["warnings"] == []

    def test_undecodable_upload_is_400(self, service):
        res = service.post("/predict", files=upload(b"definitely not pixels", name="x.txt", mime="text/plain"))
        assert res.status_code == 400
        err = res.json()["error"]
        assert err["code"] == "bad_request"
        assert "not a decodable image" in err["message"]

    def test_oversize_upload_is_413(self, service):
        res = service.post("/predict", files=upload(b"\x89PNG" + b"\x00" * (600 * 1024)))
        assert res.status_code == 413
        err = res.json()["error"]
        assert err["code"] == "payload_too_large"
        assert "byte limit" in err["message"]

    def test_unknown_explain_choice_is_422(self, service):
        res = service.post("/predict?explain=shap", files=upload(png_bytes(noisy_image())))
        assert res.status_code == 422
        err = res.json()["error"]
        assert err["code"] == "validation_error"
        assert "explain must be one of" in err["message"]

    def test_missing_file_field_is_422(self, service):
        res = service.post("/predict")
        assert res.status_code == 422
        assert res.json()["error"]["code"] == "validation_error"


def _decode_overlay(b64: str) -> Image.Image:
    return Image.open(io.BytesIO(base64.b64decode(b64)))


class TestExplanations:
    def test_both_overlays_match_upload_dimensions(self, service):
        image = noisy_image(h=150, w=120, seed=4)  # larger than the working side
        res = service.post("/predict?explain=both", files=upload(png_bytes(image)))
        assert res.status_code == 200
        body = res.json()
        bundle = body["explanations"]
        for key in ("lime", "gradcam"):
            overlay = _decode_overlay(bundle[key])
            assert overlay.size == (120, 150)  # PIL size is (W, H)
        meta = bundle["metadata"]
        assert meta["seed"] == 7
        labels = list(TOY_CLASSES)
        assert labels[meta["target_class"]] == body["predictions"][0]["label"]
        assert set(meta["lime"]) == {"surrogate_r2", "num_segments", "num_samples", "top_k"}
        assert 0.0 <= meta["lime"]["surrogate_r2"] <= 1.0
        assert meta["lime"]["num_samples"] >= meta["lime"]["num_segments"]
        assert set(meta["gradcam"]) == {"source_layer", "all_zero"}
        assert meta["gradcam"]["source_layer"] == "block5"

    def test_single_method_responses(self, service):
        image = png_bytes(noisy_image(h=80, w=80, seed=5))
        lime_only = service.post("/predict?explain=lime", files=upload(image)).json()["explanations"]
        assert "lime" in lime_only and "gradcam" not in lime_only
        cam_only = service.post("/predict?explain=gradcam", files=upload(image)).json()["explanations"]
        assert "gradcam" in cam_only and "lime" not in cam_only

    def test_repeated_request_is_byte_deterministic(self, service):
        image = png_bytes(noisy_image(h=72, w=64, seed=6))
        a = service.post("/predict?explain=both", files=upload(image)).json()
        b = service.post("/predict?explain=both", files=upload(image)).json()
        assert a["explanations"]["lime"] == b["explanations"]["lime"]
        assert a["explanations"]["gradcam"] == b["explanations"]["gradcam"]
        assert a["predictions"] == b["predictions"]

    def test_explanation_failure_degrades_to_warning(self, service, monkeypatch):
        import lesionkit.service.app as app_module

        def boom(*args, **kwargs):
            raise RuntimeError("surrogate exploded")

        monkeypatch.setattr(app_module, "lime_explain", boom)
        res = service.post("/predict?explain=lime", files=upload(png_bytes(noisy_image(seed=7))))
        assert res.status_code == 200
        body = res.json()
        assert body["predictions"]
        assert "explanations" not in body
        assert any(w.startswith("explanation failed:") and "surrogate exploded" in w for w in body["warnings"])


class TestConcurrency:
    def test_parallel_predictions_match_serial_results(self, service):
        images = [png_bytes(noisy_image(seed=10 + i)) for i in range(4)]
        serial = [
            service.post("/predict", files=upload(data)).json()["predictions"] for data in images
        ]

        def call(i):
            return i, service.post("/predict", files=upload(images[i])).json()["predictions"]

        jobs = [i % 4 for i in range(12)]
        with ThreadPoolExecutor(max_workers=8) as pool:
            for i, preds in pool.map(call, jobs):
                assert preds == serial[i]


class TestFallbackPage:
    def test_root_serves_upload_form(self, service):
        res = service.get("/")
        assert res.status_code == 200
        assert res.headers["content-type"].startswith("text/html")
        assert "<form" in res.text
        assert "/predict" in res.text
