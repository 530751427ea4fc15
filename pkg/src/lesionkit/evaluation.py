"""Held-out evaluation: model predictions to reports, tables, and plots."""

from __future__ import annotations

import json

import numpy as np

from .dataset import DatasetManifest
from .errors import DatasetError
from .metrics import EvaluationReport, argmax_predictions, build_report, confusion_matrix
from .model import ClassifierModel
from .training import load_split_arrays

REPORT_COLUMNS = ["Model", "Accuracy", "Recall", "Precision", "F1 Score", "MCC"]


def evaluate(
    model: ClassifierModel, manifest: DatasetManifest, split: str = "test", batch_size: int = 32
) -> EvaluationReport:
    """Score one manifest split with the full metric suite.

    Predictions are argmax of softmax probabilities; exact ties resolve to
    the lowest class index and are counted in the report.
    """
    if tuple(manifest.taxonomy.classes) != model.class_names:
        raise DatasetError("taxonomy mismatch between model and manifest")
    images, truths = load_split_arrays(model, manifest, split)
    probs = []
    for start in range(0, len(images), batch_size):
        probs.append(model.predict_probs(images[start : start + batch_size]))
    preds, tie_count = argmax_predictions(np.concatenate(probs, axis=0))
    cm = confusion_matrix(truths, preds, model.num_classes, class_names=model.class_names)
    return build_report(cm, tie_count=tie_count)


def report_table(rows: list[tuple[str, EvaluationReport]]) -> str:
    """Render one summary line per model, matching the published column set."""
    table = [REPORT_COLUMNS]
    for name, report in rows:
        table.append(
            [
                name,
                f"{report.accuracy:.4f}",
                f"{report.weighted_recall:.4f}",
                f"{report.weighted_precision:.4f}",
                f"{report.weighted_f1:.4f}",
                f"{report.mcc:.4f}",
            ]
        )
    widths = [max(len(row[j]) for row in table) for j in range(len(REPORT_COLUMNS))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def per_class_table(report: EvaluationReport) -> str:
    header = ["Class", "Precision", "Recall", "F1", "Support"]
    table = [header]
    names = report.confusion.class_names or [str(i) for i in range(report.confusion.num_classes)]
    for name, pc in zip(names, report.per_class):
        mark = " *" if pc.degenerate else ""
        table.append(
            [f"{name}{mark}", f"{pc.precision:.4f}", f"{pc.recall:.4f}", f"{pc.f1:.4f}", str(pc.support)]
        )
    widths = [max(len(row[j]) for row in table) for j in range(len(header))]
    lines = []
    for i, row in enumerate(table):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    if any(pc.degenerate for pc in report.per_class):
        lines.append("* zero-denominator class (metrics reported as 0)")
    return "\n".join(lines)


def save_report_json(report: EvaluationReport, path: str, model_name: str = "") -> None:
    payload = report.to_dict()
    if model_name:
        payload["model"] = model_name
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)


def plot_confusion(report: EvaluationReport, path: str, title: str = "Confusion matrix") -> None:
    """Render the confusion matrix as an annotated image file."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    counts = report.confusion.counts
    names = report.confusion.class_names or [str(i) for i in range(report.confusion.num_classes)]
    k = len(names)
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * k + 2), max(3.5, 0.6 * k + 1.5)))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(k), names, rotation=45, ha="right")
    ax.set_yticks(range(k), names)
    ax.set_xlabel("Predicted")
    ax.set_ylabel("True")
    ax.set_title(title)
    threshold = counts.max() / 2 if counts.max() > 0 else 0.5
    for i in range(k):
        for j in range(k):
            color = "white" if counts[i, j] > threshold else "black"
            ax.text(j, i, str(int(counts[i, j])), ha="center", va="center", color=color, fontsize=8)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
