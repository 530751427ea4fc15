"""Classifier assembly: frozen backbone + compact pooled head.

The head is the only part trained by default: global average pooling over
the backbone feature map, one or two dense ReLU blocks with batch norm and
dropout, then a linear output layer sized to the taxonomy. Softmax is
applied at prediction time; training consumes raw logits.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .backbones import Backbone, BackboneSpec, build_backbone, init_module_weights, resolve_spec
from .errors import ModelError
from .preprocess import PreprocessSpec, preprocess_image

STAGE_FROZEN = "frozen"
STAGE_PARTIAL = "partial"


@dataclass(frozen=True)
class HeadConfig:
    """Projection head hyperparameters. 128/0.3 and 256/0.4 are the two
    configurations used in practice; other positive sizes are accepted."""

    dense_units: tuple[int, ...] = (128,)
    dropout_rate: float = 0.3
    use_batch_norm: bool = True

    def __post_init__(self):
        if not 1 <= len(self.dense_units) <= 2:
            raise ModelError("head takes one or two dense layers")
        if any(int(u) <= 0 for u in self.dense_units):
            raise ModelError("dense units must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ModelError("dropout rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "dense_units": list(self.dense_units),
            "dropout_rate": self.dropout_rate,
            "use_batch_norm": self.use_batch_norm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HeadConfig":
        return cls(
            dense_units=tuple(int(u) for u in d["dense_units"]),
            dropout_rate=float(d["dropout_rate"]),
            use_batch_norm=bool(d.get("use_batch_norm", True)),
        )


class PooledHead(nn.Module):
    """GAP -> (dense, relu, bn, dropout) x1-2 -> linear logits."""

    def __init__(self, in_channels: int, num_classes: int, config: HeadConfig):
        super().__init__()
        blocks = []
        width = in_channels
        for units in config.dense_units:
            layers = [nn.Linear(width, units), nn.ReLU(inplace=True)]
            if config.use_batch_norm:
                layers.append(nn.BatchNorm1d(units))
            layers.append(nn.Dropout(config.dropout_rate))
            blocks.append(nn.Sequential(*layers))
            width = units
        self.blocks = nn.ModuleList(blocks)
        self.classify = nn.Linear(width, num_classes)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        x = features.mean(dim=(2, 3))  # global average pool
        for block in self.blocks:
            x = block(x)
        return self.classify(x)


class _Composite(nn.Module):
    def __init__(self, backbone_module: nn.Module, head: PooledHead, to_spatial):
        super().__init__()
        self.backbone = backbone_module
        self.head = head
        self._to_spatial = to_spatial

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self._to_spatial(self.backbone(x)))


@dataclass
class ClassifierModel:
    """Backbone + head pair with its taxonomy and preprocessing contract."""

    adapter: Backbone
    module: _Composite
    backbone_spec: BackboneSpec
    head_config: HeadConfig
    class_names: tuple[str, ...]
    preprocess: PreprocessSpec
    stage: str = STAGE_FROZEN
    stage_last_n: int = 0
    head_seed: int = 0
    trainable_layer_names: tuple[str, ...] = field(default_factory=tuple)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def logits(self, batch: np.ndarray) -> torch.Tensor:
        """Raw logits for a preprocessed (B, S, S, 3) float batch."""
        size = self.adapter.input_size
        if batch.ndim != 4 or batch.shape[1:] != (size, size, 3):
            raise ModelError(
                f"batch shape {tuple(batch.shape)} does not match (B, {size}, {size}, 3)"
            )
        x = torch.from_numpy(np.ascontiguousarray(batch)).permute(0, 3, 1, 2)
        return self.module(x)

    def predict_probs(self, batch: np.ndarray) -> np.ndarray:
        """Softmax probabilities, shape (B, K). Runs in eval mode."""
        was_training = self.module.training
        self.module.eval()
        try:
            with torch.no_grad():
                probs = torch.softmax(self.logits(batch), dim=1)
        finally:
            self.module.train(was_training)
        return probs.numpy()

    def predict_on_images(self, images: list[np.ndarray], batch_size: int = 32) -> np.ndarray:
        """Preprocess raw uint8 images and predict. Convenience for callers
        that hold decoded images rather than tensors (explanations, serving)."""
        out = []
        for start in range(0, len(images), batch_size):
            chunk = images[start : start + batch_size]
            batch = np.stack([preprocess_image(img, self.preprocess) for img in chunk])
            out.append(self.predict_probs(batch))
        return np.concatenate(out, axis=0)

    def _resolve_layer(self, layer: str | None) -> tuple[str, nn.Module]:
        name = layer if layer is not None else self.adapter.feature_layer
        modules = dict(self.module.named_modules())
        for candidate in (f"backbone.{name}", name):
            if candidate in modules:
                return candidate, modules[candidate]
        raise ModelError(f"no layer named {name!r} in model")

    def _spatialize(self, layer_name: str, raw: torch.Tensor) -> torch.Tensor:
        # The adapter knows the layout of its own feature layer; any other
        # layer must already be (B, C, H, W).
        if layer_name == f"backbone.{self.adapter.feature_layer}":
            return self.adapter.to_spatial(raw)
        if raw.dim() != 4:
            raise ModelError(f"layer {layer_name!r} output is not a spatial map")
        return raw

    def activations_and_gradients(
        self, image: np.ndarray, target_class: int, layer: str | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Feature map and d(logit_target)/d(features) at one layer.

        ``image`` is a single preprocessed (S, S, 3) array. Returns two
        (H', W', C) arrays in the layer's spatial arrangement.
        """
        if not 0 <= target_class < self.num_classes:
            raise ModelError(f"target class {target_class} out of range")
        size = self.adapter.input_size
        if image.shape != (size, size, 3):
            raise ModelError(f"image shape {tuple(image.shape)} does not match ({size}, {size}, 3)")
        layer_name, module = self._resolve_layer(layer)
        captured: list[torch.Tensor] = []

        def hook(_mod, _inp, out):
            captured.append(out)

        handle = module.register_forward_hook(hook)
        was_training = self.module.training
        self.module.eval()
        try:
            x = torch.from_numpy(np.ascontiguousarray(image[None])).permute(0, 3, 1, 2)
            x.requires_grad_(True)  # keeps the graph alive under a frozen backbone
            logits = self.module(x)
            raw = captured[-1]
            grad = torch.autograd.grad(logits[0, target_class], raw)[0]
        finally:
            handle.remove()
            self.module.train(was_training)
        acts = self._spatialize(layer_name, raw.detach())
        grads = self._spatialize(layer_name, grad)
        return (
            acts[0].permute(1, 2, 0).numpy().copy(),
            grads[0].permute(1, 2, 0).numpy().copy(),
        )

    def logit_with_activation(
        self, image: np.ndarray, target_class: int, layer: str | None, activation: np.ndarray
    ) -> float:
        """Forward pass with the named layer's output replaced by
        ``activation`` ((H', W', C) spatial arrangement). Used to probe the
        head as a function of the feature map, e.g. for finite differences."""
        layer_name, module = self._resolve_layer(layer)
        spatial = torch.from_numpy(np.ascontiguousarray(activation)).permute(2, 0, 1)[None]

        def hook(_mod, _inp, out):
            if layer_name == f"backbone.{self.adapter.feature_layer}":
                ref = self.adapter.to_spatial(out)
            else:
                ref = out
            if ref.shape != spatial.shape:
                raise ModelError(f"activation shape {tuple(spatial.shape)} does not match layer")
            return _unspatialize_like(out, spatial)

        handle = module.register_forward_hook(hook)
        was_training = self.module.training
        self.module.eval()
        try:
            with torch.no_grad():
                x = torch.from_numpy(np.ascontiguousarray(image[None])).permute(0, 3, 1, 2)
                logits = self.module(x)
        finally:
            handle.remove()
            self.module.train(was_training)
        return float(logits[0, target_class])


def _unspatialize_like(raw: torch.Tensor, spatial: torch.Tensor) -> torch.Tensor:
    """Map a (B, C, H, W) tensor back into the raw layer layout."""
    if raw.dim() == 4 and raw.shape == spatial.shape:
        return spatial.to(raw.dtype)
    b, c, h, w = spatial.shape
    if raw.dim() == 4:  # channels-last map
        return spatial.permute(0, 2, 3, 1).to(raw.dtype)
    tokens = spatial.permute(0, 2, 3, 1).reshape(b, h * w, c).to(raw.dtype)
    if raw.shape[1] == h * w + 1:  # keep the class token as-is
        return torch.cat([raw[:, :1, :], tokens], dim=1)
    return tokens


def assemble_classifier(
    adapter: Backbone,
    head_config: HeadConfig | None = None,
    class_names: tuple[str, ...] | list[str] = (),
    preprocess: PreprocessSpec | None = None,
    seed: int = 0,
    backbone_spec: BackboneSpec | None = None,
) -> ClassifierModel:
    """Attach a fresh head to an already-built backbone adapter."""
    if head_config is None:
        head_config = HeadConfig()
    if len(class_names) < 1:
        raise ModelError("classifier needs at least one class")
    if len(set(class_names)) != len(class_names):
        raise ModelError("duplicate class names")
    if backbone_spec is None:
        backbone_spec = BackboneSpec(name=adapter.name)
    if preprocess is None:
        preprocess = PreprocessSpec(target_size=adapter.input_size)
    head = PooledHead(adapter.feature_channels, len(class_names), head_config)
    gen = torch.Generator().manual_seed(seed)
    init_module_weights(head, gen)
    module = _Composite(adapter.module, head, adapter.to_spatial)
    model = ClassifierModel(
        adapter=adapter,
        module=module,
        backbone_spec=resolve_spec(backbone_spec, adapter),
        head_config=head_config,
        class_names=tuple(class_names),
        preprocess=preprocess,
        head_seed=seed,
    )
    set_trainable_stage(model, STAGE_FROZEN)
    return model


def build_classifier(
    backbone_spec: BackboneSpec | str,
    head_config: HeadConfig | None = None,
    class_names: tuple[str, ...] | list[str] = (),
    preprocess: PreprocessSpec | None = None,
    seed: int = 0,
) -> ClassifierModel:
    """Build a registry-backbone classifier with a seeded head init."""
    if isinstance(backbone_spec, str):
        backbone_spec = BackboneSpec(name=backbone_spec)
    adapter = build_backbone(backbone_spec)
    return assemble_classifier(
        adapter, head_config, class_names, preprocess, seed, backbone_spec=backbone_spec
    )


def set_trainable_stage(model: ClassifierModel, stage: str, last_n: int = 0) -> int:
    """Configure which parameters train. Returns the trainable tensor count.

    ``frozen`` leaves only the head trainable; ``partial`` additionally
    unfreezes the last ``last_n`` backbone layers (adapter granularity).
    """
    layers = model.adapter.layers()
    if stage == STAGE_FROZEN:
        if last_n:
            raise ModelError("frozen stage takes no layer count")
        trainable_names: tuple[str, ...] = ()
    elif stage == STAGE_PARTIAL:
        if not 1 <= last_n <= len(layers):
            raise ModelError(
                f"partial stage needs last_n in [1, {len(layers)}], got {last_n}"
            )
        trainable_names = tuple(name for name, _ in layers[-last_n:])
    else:
        raise ModelError(f"unknown trainability stage {stage!r}")

    for param in model.module.backbone.parameters():
        param.requires_grad_(False)
    for name, layer in layers:
        if name in trainable_names:
            for param in layer.parameters():
                param.requires_grad_(True)
    for param in model.module.head.parameters():
        param.requires_grad_(True)

    model.stage = stage
    model.stage_last_n = last_n
    model.trainable_layer_names = trainable_names
    return sum(1 for p in model.module.parameters() if p.requires_grad)


def apply_train_mode(model: ClassifierModel) -> None:
    """Put trainable parts in train mode and frozen parts in eval mode, so a
    frozen backbone's normalization buffers stay untouched."""
    model.module.train()
    if model.stage == STAGE_FROZEN:
        model.module.backbone.eval()
    else:
        model.module.backbone.eval()
        for name, layer in model.adapter.layers():
            if name in model.trainable_layer_names:
                layer.train()


def _hash_tensors(items: list[tuple[str, torch.Tensor]]) -> str:
    digest = hashlib.sha256()
    for name, tensor in sorted(items, key=lambda kv: kv[0]):
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().numpy().tobytes())
    return digest.hexdigest()


def backbone_checksum(model: ClassifierModel) -> str:
    """sha256 over all backbone parameters and buffers, order-stable."""
    backbone = model.module.backbone
    items = list(backbone.named_parameters()) + list(backbone.named_buffers())
    return _hash_tensors(items)


def layer_checksums(model: ClassifierModel) -> dict[str, str]:
    """Per-layer digests at the unfreezing granularity, for change audits."""
    out = {}
    for name, layer in model.adapter.layers():
        items = list(layer.named_parameters()) + list(layer.named_buffers())
        out[name] = _hash_tensors(items)
    return out
