"""Artifact save/load round trips and corruption handling."""

import io
import json
import zipfile

import numpy as np
import pytest
import torch

from lesionkit.checkpoint import (
    SCHEMA_VERSION,
    checkpoint_model_id,
    load_checkpoint,
    save_checkpoint,
)
from lesionkit.errors import ArtifactError
from lesionkit.model import HeadConfig, build_classifier, set_trainable_stage


@pytest.fixture(scope="module")
def saved(tmp_path_factory):
    model = build_classifier(
        "micro_cnn",
        HeadConfig(dense_units=(64,), dropout_rate=0.2),
        class_names=("m", "n", "o"),
        seed=11,
    )
    set_trainable_stage(model, "partial", last_n=2)
    path = str(tmp_path_factory.mktemp("ckpt") / "model.lkpt")
    model_id = save_checkpoint(model, path)
    return model, path, model_id


class TestRoundTrip:
    def test_predictions_bitwise_identical(self, saved):
        model, path, _ = saved
        loaded = load_checkpoint(path)
        batch = np.random.default_rng(0).standard_normal((3, 224, 224, 3)).astype(np.float32)
        np.testing.assert_array_equal(loaded.predict_probs(batch), model.predict_probs(batch))

    def test_full_state_restored(self, saved):
        model, path, _ = saved
        loaded = load_checkpoint(path)
        for key, val in model.module.state_dict().items():
            assert torch.equal(val, loaded.module.state_dict()[key]), key

    def test_metadata_restored(self, saved):
        model, path, _ = saved
        loaded = load_checkpoint(path)
        assert loaded.class_names == ("m", "n", "o")
        assert loaded.head_config == model.head_config
        assert loaded.preprocess == model.preprocess
        assert loaded.backbone_spec == model.backbone_spec
        assert (loaded.stage, loaded.stage_last_n) == ("partial", 2)
        assert loaded.trainable_layer_names == ("block4", "block5")

    def test_model_id_is_file_hash(self, saved):
        import hashlib

        _, path, model_id = saved
        with open(path, "rb") as fh:
            assert model_id == hashlib.sha256(fh.read()).hexdigest()
        assert checkpoint_model_id(path) == model_id

    def test_load_ignores_pretrained_sources(self, saved, tmp_path):
        # weights must come from the artifact, not from a registry rebuild
        model, _, _ = saved
        with torch.no_grad():
            model.module.head.classify.bias.add_(1.5)
        path = str(tmp_path / "shifted.lkpt")
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        assert torch.equal(loaded.module.head.classify.bias, model.module.head.classify.bias)


def _rewrite_artifact(src, dst, mutate):
    """Copy a zip artifact, letting ``mutate`` edit the member dict."""
    with zipfile.ZipFile(src) as zf:
        members = {name: zf.read(name) for name in zf.namelist()}
    mutate(members)
    with zipfile.ZipFile(dst, "w") as zf:
        for name, data in members.items():
            zf.writestr(name, data)


class TestCorruption:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactError, match="no artifact at"):
            load_checkpoint(str(tmp_path / "absent.lkpt"))

    def test_not_a_zip(self, tmp_path):
        path = tmp_path / "junk.lkpt"
        path.write_bytes(b"\x00\x01 not a zip")
        with pytest.raises(ArtifactError, match="not a zip file"):
            load_checkpoint(str(path))

    def test_truncated_file(self, saved, tmp_path):
        _, src, _ = saved
        data = open(src, "rb").read()
        path = tmp_path / "cut.lkpt"
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(ArtifactError, match="corrupt artifact|not a zip"):
            load_checkpoint(str(path))

    def test_missing_member(self, saved, tmp_path):
        _, src, _ = saved
        dst = str(tmp_path / "nometa.lkpt")
        _rewrite_artifact(src, dst, lambda m: m.pop("meta.json"))
        with pytest.raises(ArtifactError, match="missing members"):
            load_checkpoint(dst)

    def test_unparseable_metadata(self, saved, tmp_path):
        _, src, _ = saved
        dst = str(tmp_path / "badmeta.lkpt")
        _rewrite_artifact(src, dst, lambda m: m.__setitem__("meta.json", b"{nope"))
        with pytest.raises(ArtifactError, match="bad metadata"):
            load_checkpoint(dst)

    def test_schema_version_mismatch(self, saved, tmp_path):
        _, src, _ = saved
        dst = str(tmp_path / "future.lkpt")

        def bump(members):
            meta = json.loads(members["meta.json"])
            meta["schema_version"] = SCHEMA_VERSION + 1
            members["meta.json"] = json.dumps(meta).encode()

        _rewrite_artifact(src, dst, bump)
        with pytest.raises(ArtifactError, match="unsupported artifact schema version"):
            load_checkpoint(dst)

    def test_incomplete_metadata(self, saved, tmp_path):
        _, src, _ = saved
        dst = str(tmp_path / "partial.lkpt")

        def drop(members):
            meta = json.loads(members["meta.json"])
            del meta["head"]
            members["meta.json"] = json.dumps(meta).encode()

        _rewrite_artifact(src, dst, drop)
        with pytest.raises(ArtifactError, match="incomplete metadata"):
            load_checkpoint(dst)

    def test_arrays_architecture_mismatch(self, saved, tmp_path):
        _, src, _ = saved
        dst = str(tmp_path / "mismatch.lkpt")

        def drop_key(members):
            arrays = np.load(io.BytesIO(members["arrays.npz"]))
            kept = {k: arrays[k] for k in arrays.files if k != "head.classify.weight"}
            buf = io.BytesIO()
            np.savez(buf, **kept)
            members["arrays.npz"] = buf.getvalue()

        _rewrite_artifact(src, dst, drop_key)
        with pytest.raises(ArtifactError, match="does not match its declared architecture"):
            load_checkpoint(dst)

    def test_declared_head_shape_mismatch(self, saved, tmp_path):
        _, src, _ = saved
        dst = str(tmp_path / "wronghead.lkpt")

        def widen(members):
            meta = json.loads(members["meta.json"])
            meta["head"]["dense_units"] = [256]
            members["meta.json"] = json.dumps(meta).encode()

        _rewrite_artifact(src, dst, widen)
        with pytest.raises(ArtifactError, match="does not match its declared architecture"):
            load_checkpoint(dst)
