"""End-to-end evaluation reports, text tables, JSON, and the matrix plot."""

import json
import math

import numpy as np
import pytest
from PIL import Image

from lesionkit.errors import DatasetError
from lesionkit.evaluation import (
    REPORT_COLUMNS,
    evaluate,
    per_class_table,
    plot_confusion,
    report_table,
    save_report_json,
)
from lesionkit.metrics import ConfusionMatrix, build_report
from lesionkit.model import build_classifier
from lesionkit.training import load_split_arrays


class TestEvaluate:
    def test_report_matches_from_scratch_recomputation(self, toy_model, toy_manifest):
        report = evaluate(toy_model, toy_manifest, split="test")

        images, truths = load_split_arrays(toy_model, toy_manifest, "test")
        probs = toy_model.predict_probs(images)
        preds = probs.argmax(axis=1)  # ties to lowest index, same convention
        k = toy_model.num_classes
        counts = np.zeros((k, k), dtype=int)
        for t, p in zip(truths, preds):
            counts[t, p] += 1
        assert report.confusion.counts.tolist() == counts.tolist()
        n = counts.sum()
        assert report.accuracy == pytest.approx(np.trace(counts) / n, abs=1e-12)
        weighted_f1 = 0.0
        for i in range(k):
            tp = counts[i, i]
            col = counts[:, i].sum()
            row = counts[i, :].sum()
            prec = tp / col if col else 0.0
            rec = tp / row if row else 0.0
            f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
            assert report.per_class[i].precision == pytest.approx(prec, abs=1e-12)
            assert report.per_class[i].recall == pytest.approx(rec, abs=1e-12)
            assert report.per_class[i].support == row
            weighted_f1 += f1 * row
        assert report.weighted_f1 == pytest.approx(weighted_f1 / n, abs=1e-12)
        t_sum = counts.sum(axis=1)
        p_sum = counts.sum(axis=0)
        num = np.trace(counts) * n - int(t_sum @ p_sum)
        den = math.sqrt(n * n - int(p_sum @ p_sum)) * math.sqrt(n * n - int(t_sum @ t_sum))
        if den > 0:
            assert report.mcc == pytest.approx(num / den, abs=1e-12)
        else:
            assert report.mcc == 0.0 and report.mcc_degenerate
        assert report.confusion.class_names == toy_model.class_names

    def test_taxonomy_mismatch_rejected(self, toy_manifest):
        other = build_classifier("micro_cnn", class_names=("x", "y", "z"), seed=0)
        with pytest.raises(DatasetError, match="taxonomy mismatch"):
            evaluate(other, toy_manifest)

    def test_val_split_also_scorable(self, toy_model, toy_manifest):
        report = evaluate(toy_model, toy_manifest, split="val")
        assert report.confusion.total == len(toy_manifest.by_split("val"))


def _dummy_report():
    return build_report(
        ConfusionMatrix([[6, 2, 0], [1, 3, 0], [0, 0, 0]], class_names=("ant", "bee", "cat"))
    )


class TestTables:
    def test_summary_columns_and_values(self):
        report = _dummy_report()
        text = report_table([("baseline", report)])
        lines = text.splitlines()
        header = [c for c in lines[0].split("  ") if c.strip()]
        assert [h.strip() for h in header] == REPORT_COLUMNS
        assert REPORT_COLUMNS == ["Model", "Accuracy", "Recall", "Precision", "F1 Score", "MCC"]
        row = lines[2]
        assert row.startswith("baseline")
        assert f"{report.accuracy:.4f}" in row
        assert f"{report.mcc:.4f}" in row

    def test_one_row_per_model(self):
        report = _dummy_report()
        text = report_table([("a", report), ("b", report)])
        assert len(text.splitlines()) == 4  # header, rule, two rows

    def test_per_class_marks_degenerate(self):
        text = per_class_table(_dummy_report())
        lines = text.splitlines()
        assert lines[0].split()[:2] == ["Class", "Precision"]
        assert any(line.startswith("cat *") for line in lines)
        assert not any(line.startswith("ant *") for line in lines)
        assert "zero-denominator class" in lines[-1]

    def test_per_class_no_footnote_when_clean(self):
        report = build_report(ConfusionMatrix([[3, 1], [1, 3]], class_names=("a", "b")))
        assert "zero-denominator" not in per_class_table(report)


class TestArtifacts:
    def test_json_round_trip(self, tmp_path):
        report = _dummy_report()
        path = tmp_path / "report.json"
        save_report_json(report, str(path), model_name="demo")
        data = json.loads(path.read_text())
        assert data["model"] == "demo"
        assert data["confusion_matrix"] == [[6, 2, 0], [1, 3, 0], [0, 0, 0]]
        assert data["accuracy"] == pytest.approx(report.accuracy)
        assert data["mcc"] == pytest.approx(report.mcc)
        assert len(data["per_class"]) == 3
        assert data["per_class"][2]["degenerate"] is True

    def test_confusion_plot_is_decodable_png(self, tmp_path):
        path = tmp_path / "cm.png"
        plot_confusion(_dummy_report(), str(path), title="demo")
        with Image.open(path) as img:
            assert img.format == "PNG"
            assert img.size[0] > 100 and img.size[1] > 100
