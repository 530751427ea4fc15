"""Pretrained feature-extraction backbones behind a small registry.

Two lightweight backbones ship with the package and carry bundled
deterministic weights, so the full pipeline runs offline and at desk
scale: ``micro_cnn`` (stride-32 conv stack, the canonical Grad-CAM
target) and ``micro_vit`` (patch tokens + transformer encoder, exercising
the token-grid attribution path). The remaining entries adapt torchvision
ImageNet models; their pretrained weights are fetched on demand and the
adapters fall back to random initialization when ``pretrained=False``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ModelError

# Seed for the bundled weight sets of the in-package backbones.
_BUNDLED_WEIGHTS_SEED = 902143


@dataclass(frozen=True)
class BackboneSpec:
    """Registry reference plus the input geometry the backbone expects."""

    name: str = "micro_cnn"
    input_size: int | None = None
    feature_layer: str | None = None
    pretrained: bool = True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_size": self.input_size,
            "feature_layer": self.feature_layer,
            "pretrained": self.pretrained,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BackboneSpec":
        return cls(
            name=d["name"],
            input_size=d.get("input_size"),
            feature_layer=d.get("feature_layer"),
            pretrained=bool(d.get("pretrained", True)),
        )


class Backbone:
    """A feature extractor plus the metadata the classifier needs.

    ``module(x)`` maps a (B, 3, S, S) batch to the raw output of
    ``feature_layer``; ``to_spatial`` rearranges that output into
    (B, C, H', W') so pooling, Grad-CAM, and the head see one layout.
    """

    def __init__(self, name, module, feature_layer, feature_channels, input_size):
        self.name = name
        self.module = module
        self.feature_layer = feature_layer
        self.feature_channels = feature_channels
        self.input_size = input_size

    def to_spatial(self, features: torch.Tensor) -> torch.Tensor:
        return features

    def layers(self) -> list[tuple[str, nn.Module]]:
        """Unfreezing granularity: the top-level children, forward order."""
        return list(self.module.named_children())


def _kaiming_uniform_(tensor: torch.Tensor, fan_in: int, generator: torch.Generator) -> None:
    bound = math.sqrt(6.0 / fan_in)
    tensor.uniform_(-bound, bound, generator=generator)


def init_module_weights(module: nn.Module, generator: torch.Generator) -> None:
    """Variance-scaled init for conv/linear layres driven by one generator."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = m.in_channels * m.kernel_size[0] * m.kernel_size[1]
            with torch.no_grad():
                _kaiming_uniform_(m.weight, fan_in, generator)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.Linear):
            with torch.no_grad():
                _kaiming_uniform_(m.weight, m.in_features, generator)
                if m.bias is not None:
                    m.bias.zero_()


class _ConvBlock(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )


class MicroCnn(nn.Module):
    """Five stride-2 conv blocks; 224 input -> 7x7x128 feature map."""

    CHANNELS = (16, 32, 64, 96, 128)

    def __init__(self):
        super().__init__()
        in_ch = 3
        for i, out_ch in enumerate(self.CHANNELS, start=1):
            self.add_module(f"block{i}", _ConvBlock(in_ch, out_ch))
            in_ch = out_ch

    def forward(self, x):
        for block in self.children():
            x = block(x)
        return x


class MicroViT(nn.Module):
    """Patch embedding followed by a small transformer encoder.

    Output is the token sequence (B, N, C); the adapter reshapes it back
    to the native patch grid for pooling and attribution.
    """

    def __init__(self, dim: int = 64, patch: int = 16, depth: int = 2, heads: int = 4):
        super().__init__()
        self.patch = patch
        self.embed = nn.Conv2d(3, dim, kernel_size=patch, stride=patch)
        layer = nn.TransformerEncoderLayer(
            d_model=dim,
            nhead=heads,
            dim_feedforward=dim * 2,
            dropout=0.0,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=depth)
        self.norm = nn.LayerNorm(dim)

    def forward(self, x):
        tokens = self.embed(x)  # (B, C, H/p, W/p)
        b, c, h, w = tokens.shape
        tokens = tokens.flatten(2).transpose(1, 2)  # (B, N, C)
        tokens = self.encoder(tokens)
        return self.norm(tokens)


class _TokenGridBackbone(Backbone):
    """Backbone whose feature layer emits (B, N, C) patch tokens."""

    def __init__(self, name, module, feature_layer, feature_channels, input_size, grid: int):
        super().__init__(name, module, feature_layer, feature_channels, input_size)
        self.grid = grid

    def to_spatial(self, features: torch.Tensor) -> torch.Tensor:
        b, n, c = features.shape
        tokens = features
        if n == self.grid * self.grid + 1:  # leading class token
            tokens = features[:, 1:, :]
        elif n != self.grid * self.grid:
            raise ModelError(f"cannot arrange {n} tokens on a {self.grid}x{self.grid} grid")
        return tokens.reshape(b, self.grid, self.grid, c).permute(0, 3, 1, 2)


class _ChannelsLastBackbone(Backbone):
    """Backbone whose feature layer emits (B, H, W, C) maps (swin-style)."""

    def to_spatial(self, features: torch.Tensor) -> torch.Tensor:
        return features.permute(0, 3, 1, 2)


def _build_micro_cnn(pretrained: bool) -> Backbone:
    # construction is seeded too: attention/norm params that
    # init_module_weights does not cover must still be reproducible
    with torch.random.fork_rng():
        torch.manual_seed(_BUNDLED_WEIGHTS_SEED)
        module = MicroCnn()
    if pretrained:
        gen = torch.Generator().manual_seed(_BUNDLED_WEIGHTS_SEED)
        init_module_weights(module, gen)
    return Backbone("micro_cnn", module, "block5", MicroCnn.CHANNELS[-1], 224)


def _build_micro_vit(pretrained: bool) -> Backbone:
    with torch.random.fork_rng():
        torch.manual_seed(_BUNDLED_WEIGHTS_SEED + 1)
        module = MicroViT()
    if pretrained:
        gen = torch.Generator().manual_seed(_BUNDLED_WEIGHTS_SEED + 1)
        init_module_weights(module, gen)
    return _TokenGridBackbone("micro_vit", module, "norm", 64, 224, grid=224 // module.patch)


def _torchvision_backbone(
    name: str,
    model_fn: str,
    weights_name: str,
    feature_attr: str,
    feature_channels: int,
    input_size: int = 224,
    flavor: str = "conv",
):
    def build(pretrained: bool) -> Backbone:
        from torchvision import models

        weights = None
        if pretrained:
            try:
                weights = models.get_weight(weights_name)
            except Exception as exc:
                raise ModelError(f"no pretrained weights available for {name}: {exc}") from exc
        try:
            with torch.random.fork_rng():
                torch.manual_seed(_BUNDLED_WEIGHTS_SEED)
                full = getattr(models, model_fn)(weights=weights)
        except ModelError:
            raise
        except Exception as exc:
            raise ModelError(f"could not load backbone {name}: {exc}") from exc

        if feature_attr == "_resnet_trunk":
            children = dict(full.named_children())
            module = nn.Sequential()
            for child_name in ["conv1", "bn1", "relu", "maxpool", "layer1", "layer2", "layer3", "layer4"]:
                module.add_module(child_name, children[child_name])
            layer = "layer4"
        else:
            module = getattr(full, feature_attr)
            layer = list(dict(module.named_children()))[-1]
        if flavor == "channels_last":
            return _ChannelsLastBackbone(name, module, layer, feature_channels, input_size)
        return Backbone(name, module, layer, feature_channels, input_size)

    return build


def _build_vit_b16(pretrained: bool) -> Backbone:
    from torchvision import models

    weights = models.ViT_B_16_Weights.IMAGENET1K_V1 if pretrained else None
    try:
        with torch.random.fork_rng():
            torch.manual_seed(_BUNDLED_WEIGHTS_SEED)
            full = models.vit_b_16(weights=weights)
    except Exception as exc:
        raise ModelError(f"could not load backbone vit_b16: {exc}") from exc

    class ViTFeatures(nn.Module):
        def __init__(self, vit):
            super().__init__()
            self.conv_proj = vit.conv_proj
            self.class_token = vit.class_token
            self.encoder = vit.encoder
            self._process_input = vit._process_input

        def forward(self, x):
            x = self._process_input(x)
            cls = self.class_token.expand(x.shape[0], -1, -1)
            x = torch.cat([cls, x], dim=1)
            return self.encoder(x)

    return _TokenGridBackbone("vit_b16", ViTFeatures(full), "encoder", 768, 224, grid=14)


_REGISTRY = {
    "micro_cnn": _build_micro_cnn,
    "micro_vit": _build_micro_vit,
    "vgg16": _torchvision_backbone("vgg16", "vgg16", "VGG16_Weights.IMAGENET1K_V1", "features", 512),
    "resnet50": _torchvision_backbone(
        "resnet50", "resnet50", "ResNet50_Weights.IMAGENET1K_V2", "_resnet_trunk", 2048
    ),
    "mobilenet_v2": _torchvision_backbone(
        "mobilenet_v2", "mobilenet_v2", "MobileNet_V2_Weights.IMAGENET1K_V2", "features", 1280
    ),
    "efficientnet_b0": _torchvision_backbone(
        "efficientnet_b0", "efficientnet_b0", "EfficientNet_B0_Weights.IMAGENET1K_V1", "features", 1280
    ),
    "convnext_tiny": _torchvision_backbone(
        "convnext_tiny", "convnext_tiny", "ConvNeXt_Tiny_Weights.IMAGENET1K_V1", "features", 768
    ),
    "swin_t": _torchvision_backbone(
        "swin_t", "swin_t", "Swin_T_Weights.IMAGENET1K_V1", "features", 768, flavor="channels_last"
    ),
    "vit_b16": _build_vit_b16,
}


def registry_names() -> list[str]:
    return sorted(_REGISTRY)


def build_backbone(spec: BackboneSpec) -> Backbone:
    """Instantiate a registry backbone; unknown names raise ``ModelError``."""
    if spec.name not in _REGISTRY:
        raise ModelError(f"unknown backbone {spec.name!r}; registry has {registry_names()}")
    backbone = _REGISTRY[spec.name](spec.pretrained)
    if spec.input_size is not None and spec.input_size != backbone.input_size:
        backbone.input_size = spec.input_size
    if spec.feature_layer is not None:
        backbone.feature_layer = spec.feature_layer
    return backbone


def resolve_spec(spec: BackboneSpec, backbone: Backbone) -> BackboneSpec:
    """Fill a spec's optional fields from the built backbone."""
    return BackboneSpec(
        name=spec.name,
        input_size=backbone.input_size,
        feature_layer=backbone.feature_layer,
        pretrained=spec.pretrained,
    )
