"""Resize + normalize stage feeding the classifier."""

import numpy as np
import pytest
from PIL import Image

from lesionkit.errors import DatasetError
from lesionkit.preprocess import (
    IMAGENET_MEAN,
    IMAGENET_STD,
    PreprocessSpec,
    denormalize_image,
    load_image,
    preprocess_image,
)


def test_resize_to_224_and_299():
    rng = np.random.default_rng(0)
    image = rng.integers(0, 256, size=(400, 600, 3), dtype=np.uint8)
    assert preprocess_image(image, PreprocessSpec(target_size=224)).shape == (224, 224, 3)
    assert preprocess_image(image, PreprocessSpec(target_size=299)).shape == (299, 299, 3)


def test_grayscale_replicated_and_alpha_dropped():
    gray = np.full((50, 60), 77, dtype=np.uint8)
    out = preprocess_image(gray, PreprocessSpec(target_size=32))
    assert out.shape == (32, 32, 3)
    # all three channels came from the same gray plane, modulo normalization
    denorm = denormalize_image(out, PreprocessSpec(target_size=32))
    assert np.allclose(denorm[:, :, 0], 77, atol=0.5)

    rgba = np.dstack([np.full((20, 20), v, dtype=np.uint8) for v in (10, 20, 30, 255)])
    out = preprocess_image(rgba, PreprocessSpec(target_size=20))
    denorm = denormalize_image(out, PreprocessSpec(target_size=20))
    assert np.allclose(denorm, np.broadcast_to([10, 20, 30], (20, 20, 3)), atol=0.5)


def test_channel_at_mean_maps_to_zero():
    spec = PreprocessSpec(target_size=16)
    pixel = [round(255 * m) for m in spec.channel_means]
    image = np.tile(np.array(pixel, dtype=np.uint8), (16, 16, 1))
    out = preprocess_image(image, spec)
    # rounding to uint8 leaves at most half a pixel step per channel
    for c in range(3):
        assert abs(out[:, :, c]).max() <= (0.5 / 255) / spec.channel_stds[c] + 1e-6


def test_shape_idempotent_on_target_size_input():
    rng = np.random.default_rng(1)
    image = rng.integers(0, 256, size=(224, 224, 3), dtype=np.uint8)
    out = preprocess_image(image, PreprocessSpec(target_size=224))
    assert out.shape == (224, 224, 3)
    # no resize happened: normalization is exactly invertible
    assert np.allclose(denormalize_image(out, PreprocessSpec(target_size=224)), image, atol=1e-3)


def test_normalization_round_trip_within_quantization():
    rng = np.random.default_rng(2)
    image = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
    spec = PreprocessSpec(target_size=64)
    recovered = denormalize_image(preprocess_image(image, spec), spec)
    assert np.abs(recovered - image).max() <= 0.5


def test_zero_area_image_rejected():
    with pytest.raises(DatasetError, match="degenerate image"):
        preprocess_image(np.zeros((0, 10, 3), dtype=np.uint8), PreprocessSpec())


def test_unsupported_channel_count():
    with pytest.raises(DatasetError, match="channel count"):
        preprocess_image(np.zeros((4, 4, 2), dtype=np.uint8), PreprocessSpec())


def test_spec_validation():
    with pytest.raises(DatasetError, match="positive"):
        PreprocessSpec(target_size=0)
    with pytest.raises(DatasetError, match="stds"):
        PreprocessSpec(channel_stds=(0.0, 1.0, 1.0))


def test_spec_dict_round_trip():
    spec = PreprocessSpec(target_size=299, channel_means=(0.5, 0.5, 0.5), channel_stds=(0.5, 0.5, 0.5))
    assert PreprocessSpec.from_dict(spec.to_dict()) == spec
    assert PreprocessSpec().channel_means == IMAGENET_MEAN
    assert PreprocessSpec().channel_stds == IMAGENET_STD


def test_load_image_formats(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.integers(0, 256, size=(30, 40, 3), dtype=np.uint8)
    png = tmp_path / "x.png"
    Image.fromarray(arr).save(png)
    assert np.array_equal(load_image(png), arr)

    jpg = tmp_path / "x.jpg"
    Image.fromarray(arr).save(jpg, quality=95)
    loaded = load_image(jpg)
    assert loaded.shape == arr.shape  # lossy but decodable

    bad = tmp_path / "bad.png"
    bad.write_bytes(b"nope")
    with pytest.raises(DatasetError, match="cannot decode"):
        load_image(bad)
