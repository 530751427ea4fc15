"""Training loop: Adam on categorical cross-entropy with plateau callbacks.

After every epoch the validation split is scored; the monitored metric
drives learning-rate reduction, early stopping, and best-weight tracking,
and the returned model always carries the best epoch's parameters.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .dataset import DatasetManifest
from .errors import TrainingError
from .model import ClassifierModel, apply_train_mode
from .preprocess import load_image, preprocess_image

MONITOR_MODES = {"val_loss": "min", "val_accuracy": "max"}
HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "lr"]
_LOG_EPS = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 50
    early_stop_patience: int = 7
    lr_reduce_factor: float = 0.5
    lr_reduce_patience: int = 3
    min_lr: float = 1e-6
    monitor: str = "val_loss"
    seed: int = 0
    augment: bool = False

    def __post_init__(self):
        if self.learning_rate <= 0 or self.min_lr <= 0:
            raise TrainingError("learning rates must be positive")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise TrainingError("batch size and epoch budget must be positive")
        if self.early_stop_patience < 1 or self.lr_reduce_patience < 1:
            raise TrainingError("patience must be at least 1")
        if not 0.0 < self.lr_reduce_factor < 1.0:
            raise TrainingError("lr_reduce_factor must lie in (0, 1)")
        if self.monitor not in MONITOR_MODES:
            raise TrainingError(f"monitor must be one of {sorted(MONITOR_MODES)}")


@dataclass
class EpochRecord:
    epoch: int  # 1-based
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float
    learning_rate: float


@dataclass
class TrainingHistory:
    monitor: str
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0  # 1-based epoch number
    stopped_early: bool = False

    @property
    def best_record(self) -> EpochRecord:
        return self.records[self.best_epoch - 1]

    def monitored(self, record: EpochRecord) -> float:
        return record.val_loss if self.monitor == "val_loss" else record.val_accuracy

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_HEADER)
            for r in self.records:
                writer.writerow(
                    [
                        r.epoch,
                        f"{r.train_loss:.8f}",
                        f"{r.train_accuracy:.8f}",
                        f"{r.val_loss:.8f}",
                        f"{r.val_accuracy:.8f}",
                        f"{r.learning_rate:.3e}",
                    ]
                )


@dataclass
class PlateauDecision:
    improved: bool
    reduce_lr: bool
    stop: bool


class PlateauTracker:
    """Shared improvement tracker for early stopping and lr reduction.

    Both counters reset on improvement; the lr counter also resets when a
    reduction fires, so consecutive reductions are lr_reduce_patience apart.
    """

    def __init__(self, mode: str, early_stop_patience: int, lr_reduce_patience: int):
        if mode not in ("min", "max"):
            raise TrainingError(f"unknown monitor mode {mode!r}")
        self.mode = mode
        self.early_stop_patience = early_stop_patience
        self.lr_reduce_patience = lr_reduce_patience
        self.best_value = math.inf if mode == "min" else -math.inf
        self.best_epoch = 0
        self._stop_wait = 0
        self._lr_wait = 0

    def _is_better(self, value: float) -> bool:
        return value < self.best_value if self.mode == "min" else value > self.best_value

    def update(self, epoch: int, value: float) -> PlateauDecision:
        if self._is_better(value):
            self.best_value = value
            self.best_epoch = epoch
            self._stop_wait = 0
            self._lr_wait = 0
            return PlateauDecision(improved=True, reduce_lr=False, stop=False)
        self._stop_wait += 1
        self._lr_wait += 1
        reduce_lr = self._lr_wait >= self.lr_reduce_patience
        if reduce_lr:
            self._lr_wait = 0
        stop = self._stop_wait >= self.early_stop_patience
        return PlateauDecision(improved=False, reduce_lr=reduce_lr, stop=stop)


def load_split_arrays(
    model_or_spec, manifest: DatasetManifest, split: str
) -> tuple[np.ndarray, np.ndarray]:
    """Decode and preprocess one split into (X, y) arrays.

    X is (N, S, S, 3) float32, y is int64 class indices in taxonomy order.
    """
    pre = model_or_spec.preprocess if hasattr(model_or_spec, "preprocess") else model_or_spec
    records = manifest.by_split(split)
    if not records:
        raise TrainingError(f"empty split: {split!r}")
    xs = np.empty((len(records), pre.target_size, pre.target_size, 3), dtype=np.float32)
    ys = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        xs[i] = preprocess_image(load_image(rec.path), pre)
        ys[i] = manifest.taxonomy.index_of(rec.label)
    return xs, ys


def evaluate_arrays(model, images: np.ndarray, labels: np.ndarray, batch_size: int = 32):
    """Mean cross-entropy and top-1 accuracy over preprocessed arrays.

    Works with anything exposing ``predict_probs``; loss is computed from
    the predicted probability of the true class, so a model emitting exact
    one-hots scores loss 0.
    """
    if len(images) == 0:
        raise TrainingError("empty split")
    loss_sum = 0.0
    correct = 0
    for start in range(0, len(images), batch_size):
        probs = model.predict_probs(images[start : start + batch_size])
        y = labels[start : start + batch_size]
        p_true = np.clip(probs[np.arange(len(y)), y], _LOG_EPS, 1.0)
        loss_sum += float(-np.log(p_true).sum())
        correct += int((np.argmax(probs, axis=1) == y).sum())
    n = len(images)
    return loss_sum / n, correct / n


def evaluate_epoch(model: ClassifierModel, manifest: DatasetManifest, split: str, batch_size: int = 32):
    """Evaluate one named manifest split in evaluation mode."""
    images, labels = load_split_arrays(model, manifest, split)
    return evaluate_arrays(model, images, labels, batch_size)


def _augment_batch(batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    out = batch.copy()
    for i in range(len(out)):
        if rng.random() < 0.5:
            out[i] = out[i, :, ::-1].copy()
        k = int(rng.integers(0, 4))
        if k:
            out[i] = np.rot90(out[i], k).copy()
    return out


def train(
    model: ClassifierModel,
    manifest: DatasetManifest,
    config: TrainingConfig | None = None,
    log_fn=None,
) -> tuple[ClassifierModel, TrainingHistory]:
    """Fit the model's trainable parameters on the manifest's train split.

    Returns the model holding the parameters of the best epoch under the
    monitored metric, plus the full per-epoch history.
    """
    if config is None:
        config = TrainingConfig()
    if tuple(manifest.taxonomy.classes) != model.class_names:
        raise TrainingError("taxonomy mismatch between model and manifest")

    x_train, y_train = load_split_arrays(model, manifest, "train")
    x_val, y_val = load_split_arrays(model, manifest, "val")

    torch.manual_seed(config.seed)
    params = [p for p in model.module.parameters() if p.requires_grad]
    if not params:
        raise TrainingError("no trainable parameters in current stage")
    optimizer = torch.optim.Adam(params, lr=config.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    tracker = PlateauTracker(
        MONITOR_MODES[config.monitor], config.early_stop_patience, config.lr_reduce_patience
    )
    history = TrainingHistory(monitor=config.monitor)
    best_state = None
    n = len(x_train)

    for epoch in range(1, config.max_epochs + 1):
        lr_now = optimizer.param_groups[0]["lr"]
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(n)
        apply_train_mode(model)
        loss_sum = 0.0
        correct = 0
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            batch = x_train[idx]
            if config.augment:
                batch = _augment_batch(batch, rng)
            xb = torch.from_numpy(np.ascontiguousarray(batch)).permute(0, 3, 1, 2)
            yb = torch.from_numpy(y_train[idx])
            optimizer.zero_grad()
            logits = model.module(xb)
            loss = loss_fn(logits, yb)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingError(
                    f"divergence: non-finite loss at epoch {epoch}, batch {batch_idx}, lr {lr_now:.3g}"
                )
            loss.backward()
            optimizer.step()
            loss_sum += value * len(idx)
            correct += int((logits.detach().argmax(dim=1) == yb).sum())

        val_loss, val_acc = evaluate_arrays(model, x_val, y_val, config.batch_size)
        record = EpochRecord(
            epoch=epoch,
            train_loss=loss_sum / n,
            train_accuracy=correct / n,
            val_loss=val_loss,
            val_accuracy=val_acc,
            learning_rate=lr_now,
        )
        history.records.append(record)
        if log_fn is not None:
            log_fn(
                f"epoch {epoch}: train_loss={record.train_loss:.4f} "
                f"train_acc={record.train_accuracy:.4f} val_loss={val_loss:.4f} "
                f"val_acc={val_acc:.4f} lr={lr_now:.2e}"
            )

        monitored = val_loss if config.monitor == "val_loss" else val_acc
        decision = tracker.update(epoch, monitored)
        if decision.improved:
            best_state = {k: v.detach().clone() for k, v in model.module.state_dict().items()}
        if decision.reduce_lr:
            for group in optimizer.param_groups:
                group["lr"] = max(group["lr"] * config.lr_reduce_factor, config.min_lr)
        if decision.stop:
            history.stopped_early = True
            break

    history.best_epoch = tracker.best_epoch
    if best_state is not None:
        model.module.load_state_dict(best_state)
    model.module.eval()
    return model, history
