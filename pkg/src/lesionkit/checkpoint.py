"""Self-describing model artifacts.

An artifact is a zip holding ``meta.json`` (schema version, backbone
reference, head configuration, class names, preprocessing contract,
trainability stage) and ``arrays.npz`` with every parameter and buffer.
No pickled objects, so artifacts are portable and safe to load.
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import replace

import numpy as np
import torch

from .backbones import BackboneSpec
from .errors import ArtifactError
from .model import ClassifierModel, HeadConfig, build_classifier, set_trainable_stage
from .preprocess import PreprocessSpec

SCHEMA_VERSION = 1
_META_NAME = "meta.json"
_ARRAYS_NAME = "arrays.npz"


def checkpoint_model_id(path: str) -> str:
    """sha256 of the artifact file; doubles as the served model identity."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def save_checkpoint(model: ClassifierModel, path: str) -> str:
    """Write the artifact and return its model id."""
    meta = {
        "schema_version": SCHEMA_VERSION,
        "backbone": model.backbone_spec.to_dict(),
        "head": model.head_config.to_dict(),
        "class_names": list(model.class_names),
        "preprocess": model.preprocess.to_dict(),
        "stage": model.stage,
        "stage_last_n": model.stage_last_n,
        "head_seed": model.head_seed,
    }
    arrays = {k: v.detach().cpu().numpy() for k, v in model.module.state_dict().items()}
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr(_META_NAME, json.dumps(meta, indent=2))
        zf.writestr(_ARRAYS_NAME, buf.getvalue())
    return checkpoint_model_id(path)


def load_checkpoint(path: str) -> ClassifierModel:
    """Rebuild the exact model an artifact describes.

    Reconstruction never touches pretrained weight sources; every tensor
    comes from the artifact itself.
    """
    try:
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
            if _META_NAME not in names or _ARRAYS_NAME not in names:
                raise ArtifactError(f"corrupt artifact {path}: missing members")
            try:
                meta = json.loads(zf.read(_META_NAME))
            except json.JSONDecodeError as exc:
                raise ArtifactError(f"corrupt artifact {path}: bad metadata") from exc
            arrays = np.load(io.BytesIO(zf.read(_ARRAYS_NAME)))
            state = {k: torch.from_numpy(arrays[k]) for k in arrays.files}
    except zipfile.BadZipFile as exc:
        raise ArtifactError(f"corrupt artifact {path}: not a zip file") from exc
    except FileNotFoundError as exc:
        raise ArtifactError(f"no artifact at {path}") from exc

    version = meta.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ArtifactError(
            f"unsupported artifact schema version {version} (expected {SCHEMA_VERSION})"
        )

    try:
        spec = BackboneSpec.from_dict(meta["backbone"])
        head = HeadConfig.from_dict(meta["head"])
        classes = tuple(meta["class_names"])
        pre = PreprocessSpec.from_dict(meta["preprocess"])
        stage = meta["stage"]
        last_n = int(meta.get("stage_last_n", 0))
        seed = int(meta.get("head_seed", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"corrupt artifact {path}: incomplete metadata") from exc

    model = build_classifier(
        replace(spec, pretrained=False), head, classes, preprocess=pre, seed=seed
    )
    model.backbone_spec = spec
    try:
        model.module.load_state_dict(state, strict=True)
    except (RuntimeError, KeyError) as exc:
        raise ArtifactError(
            f"artifact {path} does not match its declared architecture: {exc}"
        ) from exc
    set_trainable_stage(model, stage, last_n)
    return model
