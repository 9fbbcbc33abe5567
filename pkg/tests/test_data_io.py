import os
import struct

import numpy as np
import pytest
from PIL import Image

from colourvq import io_utils
from colourvq.data import (
    DatasetSpec,
    decode_image,
    generate_mondrians,
    list_image_files,
    load_dataset,
    png_bytes,
    ppm_bytes,
    to_uint8,
)
from colourvq.spaces import ColourSpace, ImageBuffer


def write_ppm(path, pixels):
    pixels = np.asarray(pixels, dtype=np.uint8)
    h, w, _ = pixels.shape
    path.write_bytes(f"P6\n{w} {h}\n255\n".encode() + pixels.tobytes())


# --------------------------------------------------------------------------
# Mondrians


def test_dataset_spec_validation():
    with pytest.raises(ValueError):
        DatasetSpec(count=0)
    with pytest.raises(ValueError):
        DatasetSpec(source="web")
    with pytest.raises(ValueError):
        DatasetSpec(source="directory")


def test_mondrians_deterministic_and_shaped():
    spec = DatasetSpec(count=64, image_side=32, seed=0)
    a, b = generate_mondrians(spec), generate_mondrians(spec)
    assert len(a) == 64
    assert all(x.data.shape == (32, 32, 3) and x.space == ColourSpace.SRGB for x in a)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(a, b))
    assert generate_mondrians(DatasetSpec(count=2, seed=1))[0].data.tobytes() != a[0].data.tobytes()


@pytest.mark.parametrize("seed", range(5))
def test_mondrian_channels_not_degenerate(seed):
    imgs = generate_mondrians(DatasetSpec(count=64, image_side=32, seed=seed))
    pooled = np.concatenate([x.data.reshape(-1, 3) for x in imgs])
    assert np.all(pooled.std(axis=0) > 0.1)
    assert pooled.min() >= 0.0 and pooled.max() <= 1.0


# --------------------------------------------------------------------------
# decoding folders


def test_known_ppm_bytes(tmp_path):
    px = [[[0, 51, 255], [255, 0, 0]], [[1, 2, 3], [128, 128, 128]]]
    write_ppm(tmp_path / "a.ppm", px)
    imgs = load_dataset(DatasetSpec("directory", image_side=2, count=10, path=str(tmp_path)))
    assert len(imgs) == 1
    assert np.array_equal(imgs[0].data, np.asarray(px, dtype=np.float64) / 255.0)


def test_directory_order_and_skipping(tmp_path, caplog):
    for name, v in (("b.png", 10), ("a.png", 20), ("c.ppm", 30)):
        arr = np.full((4, 4, 3), v, dtype=np.uint8)
        if name.endswith(".png"):
            Image.fromarray(arr).save(tmp_path / name)
        else:
            write_ppm(tmp_path / name, arr)
    (tmp_path / "broken.png").write_bytes(b"not an image")
    (tmp_path / "notes.txt").write_text("ignored")
    assert [p.name for p in list_image_files(tmp_path)] == ["a.png", "b.png", "broken.png", "c.ppm"]
    spec = DatasetSpec("directory", image_side=4, count=10, path=str(tmp_path))
    imgs = load_dataset(spec)
    assert [round(float(x.data[0, 0, 0]) * 255) for x in imgs] == [20, 10, 30]
    assert "broken.png" in caplog.text
    again = load_dataset(spec)
    assert all(x.data.tobytes() == y.data.tobytes() for x, y in zip(imgs, again))


def test_directory_count_limit_and_resize(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(3):
        Image.fromarray(rng.integers(0, 256, (10, 14, 3), dtype=np.uint8)).save(tmp_path / f"{i}.png")
    spec = DatasetSpec("directory", image_side=8, count=2, path=str(tmp_path))
    imgs = load_dataset(spec)
    assert len(imgs) == 2 and imgs[0].data.shape == (8, 8, 3)
    assert load_dataset(spec, resize=False)[0].data.shape == (10, 14, 3)


def test_empty_or_missing_directory(tmp_path):
    with pytest.raises(ValueError):
        load_dataset(DatasetSpec("directory", path=str(tmp_path)))
    with pytest.raises(FileNotFoundError):
        load_dataset(DatasetSpec("directory", path=str(tmp_path / "nope")))


def test_grayscale_png_expands_to_rgb(tmp_path):
    Image.fromarray(np.full((3, 3), 102, dtype=np.uint8), "L").save(tmp_path / "g.png")
    img = decode_image(tmp_path / "g.png")
    assert img.data.shape == (3, 3, 3)
    assert np.all(img.data == 102 / 255.0)


# --------------------------------------------------------------------------
# export


def test_png_and_ppm_export_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = ImageBuffer(rng.integers(0, 256, (5, 6, 3)) / 255.0, ColourSpace.SRGB)
    (tmp_path / "x.png").write_bytes(png_bytes(img))
    (tmp_path / "x.ppm").write_bytes(ppm_bytes(img))
    for name in ("x.png", "x.ppm"):
        assert np.array_equal(decode_image(tmp_path / name).data, img.data)
    assert png_bytes(img) == png_bytes(img)


def test_to_uint8_clamps_out_of_gamut():
    img = ImageBuffer(np.array([[[1.4, -0.2, 0.5]]]), ColourSpace.SRGB)
    assert to_uint8(img).tolist() == [[[255, 0, 128]]]


def test_raw_image_round_trip(tmp_path):
    rng = np.random.default_rng(2)
    img = ImageBuffer(rng.normal(size=(3, 4, 3)) * 50, ColourSpace.LAB)
    path = tmp_path / "x.ccf"
    io_utils.write_raw_image(path, img)
    raw = path.read_bytes()
    assert raw[:4] == b"CCF1"
    assert struct.unpack_from("<II B", raw, 4) == (3, 4, int(ColourSpace.LAB))
    back = io_utils.read_raw_image(path)
    assert back.space == ColourSpace.LAB
    assert np.array_equal(back.data, img.data.astype(np.float32))


@pytest.mark.parametrize("mutate", [lambda r: r[:5], lambda r: b"XXXX" + r[4:], lambda r: r[:-4]])
def test_raw_image_errors(tmp_path, mutate):
    img = ImageBuffer(np.zeros((2, 2, 3)), ColourSpace.DKL)
    path = tmp_path / "x.ccf"
    path.write_bytes(mutate(io_utils.raw_image_bytes(img)))
    with pytest.raises(ValueError):
        io_utils.read_raw_image(path)


def test_atomic_write_leaves_no_partial_file(tmp_path, monkeypatch):
    target = tmp_path / "sub" / "out.bin"
    io_utils.atomic_write_bytes(target, b"old")

    def boom(fd):
        raise OSError("disk full")

    monkeypatch.setattr(os, "fsync", boom)
    with pytest.raises(OSError):
        io_utils.atomic_write_bytes(target, b"new contents")
    assert target.read_bytes() == b"old"
    assert sorted(p.name for p in target.parent.iterdir()) == ["out.bin"]
