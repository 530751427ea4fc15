"""Dataset ingestion, manifests, and stratified splitting.

A dataset on disk is a root directory with one subdirectory per class,
each holding JPEG/PNG images. Ingestion turns that layout into a
``DatasetManifest``; ``stratified_split`` assigns every record to
train/val/test preserving per-class proportions.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

from PIL import Image, UnidentifiedImageError

from .errors import DatasetError

SPLITS = ("train", "val", "test")
UNASSIGNED = "unassigned"

DEFAULT_RATIOS = (0.6, 0.2, 0.2)

# 20-class taxonomy of the curated mobile-photo lesion dataset, with the
# per-class image counts the collection is expected to carry.
DEFAULT_CLASS_COUNTS = {
    "Arsenic": 819,
    "Actinic Keratosis": 951,
    "Basal Cell Carcinoma": 1599,
    "Squamous Cell Carcinoma": 730,
    "Melanoma": 343,
    "Nevus": 244,
    "Seborrheic Keratosis": 321,
    "Acne Vulgaris": 393,
    "Seborrheic Dermatitis": 181,
    "Vitiligo": 205,
    "Chickenpox": 482,
    "Cowpox": 330,
    "Hand Foot and Mouth Disease": 805,
    "Measles": 366,
    "Monkeypox": 1699,
    "Tinea Corporis": 176,
    "Scabies": 314,
    "Lichen Planus": 474,
    "Pityriasis Versicolor": 148,
    "Normal": 1409,
}

MANIFEST_HEADER = ["image_path", "label", "source", "split"]


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered list of class names, optionally with expected per-class counts.

    A taxonomy with a single class can be constructed (e.g. while ingesting a
    partial collection) but is rejected wherever K >= 2 actually matters
    (splitting, classifier heads).
    """

    classes: tuple[str, ...]
    expected_counts: dict[str, int] | None = None

    def __post_init__(self):
        if not self.classes:
            raise DatasetError("taxonomy needs at least one class")
        if len(set(self.classes)) != len(self.classes):
            raise DatasetError("class names must be unique")
        if self.expected_counts is not None:
            unknown = set(self.expected_counts) - set(self.classes)
            if unknown:
                raise DatasetError(f"expected_counts for unknown classes: {sorted(unknown)}")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def index_of(self, label: str) -> int:
        try:
            return self.classes.index(label)
        except ValueError:
            raise DatasetError(f"unknown class: {label!r}") from None

    @classmethod
    def default(cls) -> "ClassTaxonomy":
        return cls(tuple(DEFAULT_CLASS_COUNTS), dict(DEFAULT_CLASS_COUNTS))

    @classmethod
    def from_classes(cls, classes) -> "ClassTaxonomy":
        return cls(tuple(classes))


@dataclass
class ImageRecord:
    path: Path
    label: str
    source: str = ""
    split: str = UNASSIGNED

    def __post_init__(self):
        self.path = Path(self.path)
        if self.split not in SPLITS and self.split != UNASSIGNED:
            raise DatasetError(f"invalid split {self.split!r}")


@dataclass
class DatasetManifest:
    taxonomy: ClassTaxonomy
    records: list[ImageRecord] = field(default_factory=list)
    split_seed: int | None = None
    split_ratios: tuple[float, float, float] | None = None
    skipped_count: int = 0

    def __post_init__(self):
        for rec in self.records:
            if rec.label not in self.taxonomy.classes:
                raise DatasetError(f"record label {rec.label!r} not in taxonomy")

    def __len__(self) -> int:
        return len(self.records)

    def by_split(self, split: str) -> list[ImageRecord]:
        return [r for r in self.records if r.split == split]

    def class_counts(self) -> dict[str, int]:
        counts = {c: 0 for c in self.taxonomy.classes}
        for rec in self.records:
            counts[rec.label] += 1
        return counts


def is_decodable_image(path: Path) -> bool:
    """True if PIL can identify and verify the file as an image."""
    try:
        with Image.open(path) as img:
            img.verify()
        return True
    except (UnidentifiedImageError, OSError, ValueError):
        return False


def ingest_directory(root: str | Path, taxonomy: ClassTaxonomy | None = None) -> DatasetManifest:
    """Scan ``root/<class_name>/<images>`` into a manifest.

    Every decodable image becomes one unassigned record; other files are
    skipped and counted. When ``taxonomy`` is None one is derived from the
    subdirectory names (sorted).
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")

    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if not class_dirs:
        raise DatasetError(f"empty dataset: no class subdirectories under {root}")

    if taxonomy is None:
        taxonomy = ClassTaxonomy.from_classes(d.name for d in class_dirs)
    else:
        unknown = [d.name for d in class_dirs if d.name not in taxonomy.classes]
        if unknown:
            raise DatasetError(f"unknown class: {', '.join(unknown)}")

    records: list[ImageRecord] = []
    skipped = 0
    for class_dir in class_dirs:
        for file in sorted(p for p in class_dir.iterdir() if p.is_file()):
            if is_decodable_image(file):
                records.append(ImageRecord(path=file, label=class_dir.name, source=root.name))
            else:
                skipped += 1

    if not records:
        raise DatasetError(f"empty dataset: no decodable images under {root}")
    return DatasetManifest(taxonomy=taxonomy, records=records, skipped_count=skipped)


def _largest_remainder_counts(n: int, ratios: tuple[float, float, float]) -> list[int]:
    """Split n into integer parts matching ratios; ties go train > val > test."""
    exact = [n * r for r in ratios]
    counts = [int(e) for e in exact]
    remainders = [e - c for e, c in zip(exact, counts)]
    leftover = n - sum(counts)
    # Sort split indices by descending remainder, earlier split wins ties.
    order = sorted(range(len(ratios)), key=lambda j: (-remainders[j], j))
    for j in order[:leftover]:
        counts[j] += 1
    return counts


def stratified_split(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> DatasetManifest:
    """Assign every record to train/val/test, stratified per class.

    Per-class counts follow the largest-remainder rounding of the ratios.
    The assignment depends only on (seed, sorted record paths), so it is
    invariant under permutation of the record list.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DatasetError("ratios must be three nonnegative fractions")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must sum to 1, got {sum(ratios)}")
    if manifest.taxonomy.num_classes < 2:
        raise DatasetError("K >= 2 required to stratify")

    by_class: dict[str, list[ImageRecord]] = {c: [] for c in manifest.taxonomy.classes}
    for rec in manifest.records:
        by_class[rec.label].append(rec)

    assignment: dict[str, str] = {}
    for cls, recs in by_class.items():
        if not recs:
            continue
        if len(recs) < 3:
            raise DatasetError(f"class too small to stratify: {cls!r} has {len(recs)} records")
        paths = sorted(str(r.path) for r in recs)
        rng = random.Random(f"{seed}:{cls}")
        rng.shuffle(paths)
        counts = _largest_remainder_counts(len(paths), ratios)
        start = 0
        for split_name, k in zip(SPLITS, counts):
            for p in paths[start : start + k]:
                assignment[p] = split_name
            start += k

    new_records = [replace(rec, split=assignment[str(rec.path)]) for rec in manifest.records]
    return DatasetManifest(
        taxonomy=manifest.taxonomy,
        records=new_records,
        split_seed=seed,
        split_ratios=tuple(ratios),
        skipped_count=manifest.skipped_count,
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Write the manifest as delimited text; image paths relative to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    base = path.resolve().parent
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(MANIFEST_HEADER)
        for rec in manifest.records:
            try:
                rel = rec.path.resolve().relative_to(base)
            except ValueError:
                import os

                rel = Path(os.path.relpath(rec.path.resolve(), base))
            writer.writerow([rel.as_posix(), rec.label, rec.source, rec.split])


def load_manifest(path: str | Path, taxonomy: ClassTaxonomy | None = None) -> DatasetManifest:
    """Read a manifest file; derive the taxonomy from labels unless given."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest {path} does not exist")
    base = path.resolve().parent
    records: list[ImageRecord] = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DatasetError(f"manifest {path} has unexpected header {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 4:
                raise DatasetError(f"manifest {path} has malformed row {row}")
            rel, label, source, split = row
            records.append(ImageRecord(path=base / rel, label=label, source=source, split=split))
    if taxonomy is None:
        taxonomy = ClassTaxonomy.from_classes(sorted({r.label for r in records}))
    return DatasetManifest(taxonomy=taxonomy, records=records)
