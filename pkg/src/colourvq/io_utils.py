"""Atomic file writes and the raw float image format."""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .spaces import ColourSpace, ImageBuffer

RAW_MAGIC = b"CCF1"
_RAW_HEADER = struct.Struct("<4sIIB")


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a sibling temp file and ``os.replace`` so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def raw_image_bytes(img: ImageBuffer) -> bytes:
    header = _RAW_HEADER.pack(RAW_MAGIC, img.height, img.width, int(img.space))
    return header + np.ascontiguousarray(img.data, dtype="<f4").tobytes()


def write_raw_image(path, img: ImageBuffer) -> None:
    atomic_write_bytes(path, raw_image_bytes(img))


def read_raw_image(path) -> ImageBuffer:
    raw = Path(path).read_bytes()
    if len(raw) < _RAW_HEADER.size:
        raise ValueError(f"{path}: truncated raw image header")
    magic, h, w, tag = _RAW_HEADER.unpack_from(raw)
    if magic != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}, expected {RAW_MAGIC!r}")
    n = h * w * 3
    if len(raw) != _RAW_HEADER.size + 4 * n:
        raise ValueError(f"{path}: expected {n} float32 values after the header")
    data = np.frombuffer(raw, dtype="<f4", count=n, offset=_RAW_HEADER.size)
    return ImageBuffer(data.astype(np.float64).reshape(h, w, 3), ColourSpace(tag))
