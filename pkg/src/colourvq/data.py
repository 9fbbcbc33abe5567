"""Datasets: seeded Mondrian images and PNG/PPM folders."""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .io_utils import atomic_write_bytes
from .spaces import ColourSpace, ImageBuffer, convert_image

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".ppm")


@dataclass(frozen=True)
class DatasetSpec:
    source: str = "synthetic"  # "synthetic" or "directory"
    image_side: int = 32
    count: int = 64
    seed: int = 0
    path: str | None = None

    def __post_init__(self):
        if self.source not in ("synthetic", "directory"):
            raise ValueError(f"dataset source must be 'synthetic' or 'directory', got {self.source!r}")
        if self.count < 1:
            raise ValueError("dataset count must be at least 1")
        if self.image_side < 1:
            raise ValueError("image_side must be at least 1")
        if self.source == "directory" and not self.path:
            raise ValueError("directory datasets need a path")


def mondrian(side: int, rng) -> ImageBuffer:
    """One image: a base colour overlaid with 5-20 uniform axis-aligned rectangles."""
    img = np.empty((side, side, 3))
    img[:] = rng.uniform(0.0, 1.0, size=3)
    for _ in range(int(rng.integers(5, 21))):
        y0, y1 = np.sort(rng.integers(0, side + 1, size=2))
        x0, x1 = np.sort(rng.integers(0, side + 1, size=2))
        if y1 == y0:
            y1 = min(y0 + 1, side)
            y0 = y1 - 1
        if x1 == x0:
            x1 = min(x0 + 1, side)
            x0 = x1 - 1
        img[y0:y1, x0:x1] = rng.uniform(0.0, 1.0, size=3)
    return ImageBuffer(img, ColourSpace.SRGB)


def generate_mondrians(spec: DatasetSpec) -> list[ImageBuffer]:
    rng = np.random.default_rng(spec.seed)
    return [mondrian(spec.image_side, rng) for _ in range(spec.count)]


def decode_image(path) -> ImageBuffer:
    """Decode a PNG or PPM file into sRGB floats in [0, 1] (8-bit values / 255)."""
    with Image.open(path) as im:
        im.load()
        if im.mode not in ("RGB", "L", "RGBA", "P", "LA"):
            if im.mode.startswith("I;16") or im.mode == "I":
                arr = np.asarray(im, dtype=np.float64) / 65535.0
                return ImageBuffer(np.repeat(arr[..., None], 3, axis=2), ColourSpace.SRGB)
        rgb = im.convert("RGB")
        arr = np.asarray(rgb, dtype=np.float64) / 255.0
    return ImageBuffer(arr, ColourSpace.SRGB, {"path": str(path)})


def list_image_files(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory {directory} does not exist")
    return sorted(
        (p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES),
        key=lambda p: p.name,
    )


def _fit_side(img: ImageBuffer, side: int) -> ImageBuffer:
    """Centre-crop to a square and resample to ``side`` pixels with box filtering."""
    h, w = img.height, img.width
    if h == side and w == side:
        return img
    s = min(h, w)
    y0, x0 = (h - s) // 2, (w - s) // 2
    crop = img.data[y0 : y0 + s, x0 : x0 + s]
    u8 = np.round(np.clip(crop, 0, 1) * 255).astype(np.uint8)
    resized = Image.fromarray(u8, "RGB").resize((side, side), Image.Resampling.BOX)
    return ImageBuffer(np.asarray(resized, dtype=np.float64) / 255.0, img.space, img.meta)


def load_dataset(spec: DatasetSpec, resize: bool = True) -> list[ImageBuffer]:
    """Decode every PNG/PPM in ``spec.path`` in lexicographic order.

    Undecodable files are skipped with a warning. At most ``spec.count``
    images are returned; with ``resize`` each is centre-cropped and scaled to
    ``spec.image_side``.
    """
    if spec.source == "synthetic":
        return generate_mondrians(spec)
    images = []
    for p in list_image_files(spec.path):
        try:
            img = decode_image(p)
        except (UnidentifiedImageError, OSError, ValueError) as exc:
            log.warning("skipping %s: %s", p, exc)
            continue
        images.append(_fit_side(img, spec.image_side) if resize else img)
        if len(images) >= spec.count:
            break
    if not images:
        raise ValueError(f"no decodable PNG/PPM images in {spec.path}")
    return images


def to_uint8(img: ImageBuffer) -> np.ndarray:
    """sRGB bytes for display; out-of-gamut values are clamped here and only here."""
    srgb = convert_image(img, ColourSpace.SRGB).data
    return np.round(np.clip(srgb, 0.0, 1.0) * 255.0).astype(np.uint8)


def png_bytes(img: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    # fixed compression settings keep the encoded bytes reproducible
    Image.fromarray(to_uint8(img), "RGB").save(buf, format="PNG", compress_level=6)
    return buf.getvalue()


def ppm_bytes(img: ImageBuffer) -> bytes:
    u8 = to_uint8(img)
    return f"P6\n{img.width} {img.height}\n255\n".encode("ascii") + u8.tobytes()


def save_png(path, img: ImageBuffer) -> None:
    atomic_write_bytes(path, png_bytes(img))
