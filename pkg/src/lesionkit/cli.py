"""Command-line entry point for the full workflow.

Subcommands: ingest, split, train, eval, explain, serve, report. Exit codes:
0 success, 1 operation failure (the underlying error message goes to stderr),
2 usage error (argparse).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .checkpoint import load_checkpoint, save_checkpoint
from .config import load_config
from .dataset import DEFAULT_RATIOS, ingest_directory, load_manifest, save_manifest, stratified_split
from .errors import LesionKitError, ModelError
from .evaluation import evaluate, per_class_table, plot_confusion, report_table, save_report_json
from .explain import gradcam_explain, lime_explain, render_composite, render_overlay, segment_superpixels
from .model import build_classifier, set_trainable_stage
from .preprocess import load_image
from .training import train


def _parse_ratios(raw: str) -> tuple:
    parts = tuple(float(p) for p in raw.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios must be three comma-separated numbers")
    return parts


def cmd_ingest(args: argparse.Namespace) -> None:
    manifest = ingest_directory(args.root)
    save_manifest(manifest, args.out)
    print(
        f"ingested {len(manifest)} images across {len(manifest.taxonomy.classes)} classes "
        f"({manifest.skipped_count} non-image files skipped) -> {args.out}"
    )


def cmd_split(args: argparse.Namespace) -> None:
    manifest = load_manifest(args.manifest)
    manifest = stratified_split(manifest, ratios=args.ratios, seed=args.seed)
    save_manifest(manifest, args.out)
    counts = {s: len(manifest.by_split(s)) for s in ("train", "val", "test")}
    print(f"split {len(manifest)} records (seed {args.seed}): {counts} -> {args.out}")


def cmd_train(args: argparse.Namespace) -> None:
    cfg = load_config(args.config)
    manifest = load_manifest(args.manifest)
    train_cfg = cfg.training_config(seed=args.seed)
    model = build_classifier(
        cfg.backbone(args.backbone),
        cfg.head_config(),
        class_names=manifest.taxonomy.classes,
        seed=train_cfg.seed,
    )
    stage, last_n = cfg.stage()
    if stage != model.stage or last_n:
        set_trainable_stage(model, stage, last_n)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, history = train(model, manifest, train_cfg, log_fn=print)

    ckpt = out / "model.lkpt"
    model_id = save_checkpoint(model, str(ckpt))
    history.to_csv(str(out / "history.csv"))
    best = history.best_record
    print(
        f"best epoch {history.best_epoch}: val_loss={best.val_loss:.4f} "
        f"val_acc={best.val_accuracy:.4f}"
        + (" (stopped early)" if history.stopped_early else "")
    )
    print(f"checkpoint {ckpt} (model_id {model_id[:12]}), history {out / 'history.csv'}")


def cmd_eval(args: argparse.Namespace) -> None:
    model = load_checkpoint(args.checkpoint)
    manifest = load_manifest(args.manifest)
    report = evaluate(model, manifest, split=args.split)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = args.name or Path(args.checkpoint).stem
    save_report_json(report, str(out / "report.json"), model_name=name)
    text = report_table([(name, report)]) + "\n\n" + per_class_table(report) + "\n"
    (out / "report.txt").write_text(text)
    plot_confusion(report, str(out / "confusion.png"), title=name)
    print(text, end="")
    print(f"wrote report.json, report.txt, confusion.png in {out}")


def cmd_explain(args: argparse.Namespace) -> None:
    model = load_checkpoint(args.checkpoint)
    image = load_image(args.image)
    cfg = load_config(args.config)
    lime_cfg = cfg.lime_config(seed=args.seed)

    probs = model.predict_on_images([image])[0]
    if args.class_name is not None:
        if args.class_name not in model.class_names:
            raise ModelError(
                f"unknown class {args.class_name!r}; model classes: {', '.join(model.class_names)}"
            )
        target = model.class_names.index(args.class_name)
    else:
        target = int(np.argmax(probs))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.image).stem

    segments = segment_superpixels(image, cfg.superpixel_params())
    lime = lime_explain(model, image, target, lime_cfg, segments=segments)
    cam = gradcam_explain(model, image, target)

    Image.fromarray(render_overlay(image, lime, "lime")).save(out / f"{stem}_lime.png")
    Image.fromarray(render_composite(image, cam)).save(out / f"{stem}_gradcam.png")
    meta = {
        "image": str(args.image),
        "target_class": model.class_names[target],
        "probabilities": {c: float(p) for c, p in zip(model.class_names, probs)},
        "lime": lime.to_metadata(),
        "gradcam": cam.to_metadata(),
    }
    (out / f"{stem}_explain.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    print(f"target class {model.class_names[target]} (p={probs[target]:.4f})")
    print(f"wrote {stem}_lime.png, {stem}_gradcam.png, {stem}_explain.json in {out}")


def cmd_serve(args: argparse.Namespace) -> None:
    import uvicorn

    from .service import ServiceSettings, create_app, load_artifact

    cfg = load_config(args.config)
    kwargs = cfg.serving_kwargs(artifact_path=args.checkpoint, host=args.host, port=args.port)
    settings = ServiceSettings(**kwargs)
    # load before binding so a bad artifact fails fast with a readable error
    state = load_artifact(settings.artifact_path)
    app = create_app(settings, state=state)
    print(f"serving {settings.artifact_path} on http://{settings.host}:{settings.port}")
    uvicorn.run(app, host=settings.host, port=settings.port, log_level="warning")


def cmd_report(args: argparse.Namespace) -> None:
    manifest = load_manifest(args.manifest)
    rows = []
    for ckpt in args.checkpoint:
        model = load_checkpoint(ckpt)
        rows.append((Path(ckpt).stem, evaluate(model, manifest, split=args.split)))
    table = report_table(rows)
    print(table)
    if args.out:
        Path(args.out).write_text(table + "\n")
        print(f"wrote {args.out}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionkit",
        description="Skin-lesion classification tooling: ingest, split, train, eval, explain, serve, report.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    p = sub.add_parser("ingest", help="scan a class-per-subdirectory image tree into a manifest")
    p.add_argument("--root", required=True, help="dataset root with one subdirectory per class")
    p.add_argument("--out", required=True, help="manifest file to write")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("split", help="assign train/val/test splits, stratified per class")
    p.add_argument("--manifest", required=True, help="manifest to read")
    p.add_argument("--out", required=True, help="manifest file to write with assignments")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--ratios",
        type=_parse_ratios,
        default=DEFAULT_RATIOS,
        help="train,val,test ratios (default 0.6,0.2,0.2)",
    )
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("train", help="train a classifier on a split manifest")
    p.add_argument("--manifest", required=True, help="manifest with split assignments")
    p.add_argument("--out", required=True, help="output directory for checkpoint and history")
    p.add_argument("--config", help="INI settings file ([training] section)")
    p.add_argument("--backbone", help="backbone registry name (overrides config)")
    p.add_argument("--seed", type=int, help="training seed (overrides config)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint on one manifest split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory for report files")
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--name", help="model name for the report (default: checkpoint stem)")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("explain", help="write LIME and Grad-CAM overlays for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True, help="image file to explain")
    p.add_argument("--out", required=True, help="output directory for overlays and metadata")
    p.add_argument("--class", dest="class_name", help="target class (default: predicted class)")
    p.add_argument("--config", help="INI settings file ([explanation] section)")
    p.add_argument("--seed", type=int, help="explanation seed (overrides config)")
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--checkpoint", required=True, help="model artifact to serve")
    p.add_argument("--config", help="INI settings file ([serving] section)")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("report", help="metric table comparing checkpoints on one split")
    p.add_argument("--manifest", required=True)
    p.add_argument(
        "--checkpoint",
        required=True,
        action="append",
        help="checkpoint to include (repeatable)",
    )
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--out", help="write the table to this file as well")
    p.set_defaults(fn=cmd_report)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except LesionKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
