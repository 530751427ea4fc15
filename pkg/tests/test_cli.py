"""Command-line workflow: full pipeline, exit codes, config precedence."""

import json

import numpy as np
import pytest
from PIL import Image

from lesionkit.checkpoint import load_checkpoint
from lesionkit.cli import main
from lesionkit.dataset import load_manifest
from lesionkit.toydata import TOY_CLASSES, make_toy_dataset

CONFIG_TEXT = """
[training]
learning_rate = 1e-3
batch_size = 8
max_epochs = 2

[explanation]
num_samples = 64
target_segments = 12

[serving]
port = 8123
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Run the pipeline once: ingest -> split -> train -> eval -> explain."""
    ws = tmp_path_factory.mktemp("cli_ws")
    data = ws / "data"
    make_toy_dataset(data, num_per_class=6, image_size=48, seed=3)
    config = ws / "settings.ini"
    config.write_text(CONFIG_TEXT)

    raw = ws / "manifest.csv"
    split = ws / "splits.csv"
    run = ws / "run"
    assert main(["ingest", "--root", str(data), "--out", str(raw)]) == 0
    assert main(["split", "--manifest", str(raw), "--out", str(split), "--seed", "1"]) == 0
    assert (
        main(
            [
                "train",
                "--manifest", str(split),
                "--out", str(run),
                "--config", str(config),
                "--seed", "2",
            ]
        )
        == 0
    )
    out_eval = ws / "eval"
    assert (
        main(
            [
                "eval",
                "--manifest", str(split),
                "--checkpoint", str(run / "model.lkpt"),
                "--out", str(out_eval),
            ]
        )
        == 0
    )
    return {
        "root": ws,
        "data": data,
        "config": config,
        "manifest": raw,
        "split": split,
        "checkpoint": run / "model.lkpt",
        "history": run / "history.csv",
        "eval": out_eval,
    }


class TestPipelineArtifacts:
    def test_manifest_and_split(self, workspace):
        manifest = load_manifest(str(workspace["split"]))
        assert len(manifest) == 6 * len(TOY_CLASSES)
        counts = {s: len(manifest.by_split(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 4 * len(TOY_CLASSES), "val": len(TOY_CLASSES), "test": len(TOY_CLASSES)}

    def test_checkpoint_and_history(self, workspace):
        model = load_checkpoint(str(workspace["checkpoint"]))
        assert model.class_names == TOY_CLASSES
        lines = workspace["history"].read_text().strip().splitlines()
        assert lines[0].startswith("epoch,")
        assert len(lines) == 3  # header + two epochs

    def test_eval_outputs(self, workspace):
        report = json.loads((workspace["eval"] / "report.json").read_text())
        assert report["model"] == "model"
        assert len(report["confusion_matrix"]) == len(TOY_CLASSES)
        text = (workspace["eval"] / "report.txt").read_text()
        assert "Accuracy" in text and "MCC" in text and "Class" in text
        with Image.open(workspace["eval"] / "confusion.png") as img:
            assert img.format == "PNG"

    def test_explain_outputs(self, workspace):
        image_path = next((workspace["data"] / TOY_CLASSES[0]).glob("*.png"))
        out = workspace["root"] / "explain"
        code = main(
            [
                "explain",
                "--checkpoint", str(workspace["checkpoint"]),
                "--image", str(image_path),
                "--out", str(out),
                "--config", str(workspace["config"]),
                "--seed", "0",
            ]
        )
        assert code == 0
        stem = image_path.stem
        with Image.open(out / f"{stem}_lime.png") as img:
            assert img.size == (48, 48)
        with Image.open(out / f"{stem}_gradcam.png") as img:
            assert img.size == (3 * 48 + 2 * 8, 48)  # three panels + gutters
        meta = json.loads((out / f"{stem}_explain.json").read_text())
        assert set(meta) == {"image", "target_class", "probabilities", "lime", "gradcam"}
        assert meta["target_class"] in TOY_CLASSES
        assert meta["lime"]["num_samples"] == 64
        assert abs(sum(meta["probabilities"].values()) - 1.0) < 1e-5

    def test_explain_with_named_class(self, workspace):
        image_path = next((workspace["data"] / TOY_CLASSES[1]).glob("*.png"))
        out = workspace["root"] / "explain_named"
        code = main(
            [
                "explain",
                "--checkpoint", str(workspace["checkpoint"]),
                "--image", str(image_path),
                "--out", str(out),
                "--config", str(workspace["config"]),
                "--class", TOY_CLASSES[2],
            ]
        )
        assert code == 0
        meta = json.loads((out / f"{image_path.stem}_explain.json").read_text())
        assert meta["target_class"] == TOY_CLASSES[2]

    def test_report_multiple_checkpoints(self, workspace, capsys):
        out = workspace["root"] / "table.txt"
        code = main(
            [
                "report",
                "--manifest", str(workspace["split"]),
                "--checkpoint", str(workspace["checkpoint"]),
                "--checkpoint", str(workspace["checkpoint"]),
                "--out", str(out),
            ]
        )
        assert code == 0
        table = out.read_text()
        assert table.splitlines()[0].startswith("Model")
        assert len(table.strip().splitlines()) == 4  # header, rule, two rows
        assert "model" in capsys.readouterr().out


class TestDeterminism:
    def test_split_reruns_are_byte_identical(self, workspace):
        a = workspace["root"] / "again_a.csv"
        b = workspace["root"] / "again_b.csv"
        for out in (a, b):
            assert main(["split", "--manifest", str(workspace["manifest"]), "--out", str(out), "--seed", "1"]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_bytes() == workspace["split"].read_bytes()


class TestConfigPrecedence:
    def test_backbone_flag_overrides_file(self, workspace, tmp_path):
        config = tmp_path / "vit.ini"
        config.write_text("[training]\nbackbone = micro_vit\nmax_epochs = 1\nbatch_size = 8\nlearning_rate = 1e-3\n")
        out = tmp_path / "run"
        code = main(
            [
                "train",
                "--manifest", str(workspace["split"]),
                "--out", str(out),
                "--config", str(config),
                "--backbone", "micro_cnn",
            ]
        )
        assert code == 0
        model = load_checkpoint(str(out / "model.lkpt"))
        assert model.backbone_spec.name == "micro_cnn"


class TestExitCodes:
    def test_usage_errors_exit_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["ingest", "--root", "/tmp/x"])  # --out missing
        assert exc.value.code == 2
        with pytest.raises(SystemExit) as exc:
            main(["split", "--manifest", "m", "--out", "o", "--ratios", "0.5,0.5"])
        assert exc.value.code == 2

    def test_operation_errors_exit_one(self, workspace, tmp_path, capsys):
        assert main(["ingest", "--root", str(tmp_path / "nope"), "--out", str(tmp_path / "m.csv")]) == 1
        assert capsys.readouterr().err.startswith("error:")

        assert main(["eval", "--manifest", str(workspace["split"]), "--checkpoint", str(tmp_path / "no.lkpt"), "--out", str(tmp_path)]) == 1
        assert "no artifact at" in capsys.readouterr().err

        code = main(
            [
                "train",
                "--manifest", str(workspace["split"]),
                "--out", str(tmp_path / "r"),
                "--backbone", "xception",
            ]
        )
        assert code == 1
        assert "unknown backbone" in capsys.readouterr().err

    def test_unknown_class_flag_exits_one(self, workspace, tmp_path, capsys):
        image_path = next((workspace["data"] / TOY_CLASSES[0]).glob("*.png"))
        code = main(
            [
                "explain",
                "--checkpoint", str(workspace["checkpoint"]),
                "--image", str(image_path),
                "--out", str(tmp_path),
                "--config", str(workspace["config"]),
                "--class", "dragon",
            ]
        )
        assert code == 1
        assert "unknown class 'dragon'" in capsys.readouterr().err


class TestServe:
    def test_serve_binds_config_port_and_flag_host(self, workspace, monkeypatch):
        calls = {}

        def fake_run(app, host=None, port=None, **kwargs):
            calls["app"] = app
            calls["host"] = host
            calls["port"] = port

        import uvicorn

        monkeypatch.setattr(uvicorn, "run", fake_run)
        code = main(
            [
                "serve",
                "--checkpoint", str(workspace["checkpoint"]),
                "--config", str(workspace["config"]),
                "--host", "0.0.0.0",
            ]
        )
        assert code == 0
        assert calls["host"] == "0.0.0.0"  # flag
        assert calls["port"] == 8123  # config file
        assert calls["app"].state.serving is not None  # artifact preloaded

    def test_serve_bad_artifact_exits_one(self, workspace, tmp_path, capsys, monkeypatch):
        import uvicorn

        monkeypatch.setattr(uvicorn, "run", lambda *a, **k: pytest.fail("should not bind"))
        bad = tmp_path / "junk.lkpt"
        bad.write_bytes(b"not a checkpoint")
        code = main(["serve", "--checkpoint", str(bad), "--config", str(workspace["config"])])
        assert code == 1
        assert "corrupt artifact" in capsys.readouterr().err
