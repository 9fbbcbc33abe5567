"""Regenerate tests/data/natural: tiles cut from the sample photographs that
ship with scikit-image and scikit-learn.

Each photo is split into a left and a right half, and each half is
downscaled so its longer side is at most 96 pixels. Run once; the PNGs are
committed so the test suite does not need either library's datasets.
"""

from pathlib import Path

import numpy as np
from PIL import Image
from skimage import data
from sklearn.datasets import load_sample_images

OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "natural"
MAX_SIDE = 96


def photos():
    for name in ("astronaut", "chelsea", "coffee", "rocket", "hubble_deep_field", "immunohistochemistry", "retina"):
        yield name, getattr(data, name)()
    left, right, _ = data.stereo_motorcycle()
    yield "motorcycle_left", left
    yield "motorcycle_right", right
    china, flower = load_sample_images().images
    yield "china", china
    yield "flower", flower


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for name, img in photos():
        img = np.asarray(img, dtype=np.uint8)[..., :3]
        w = img.shape[1]
        for tag, half in (("a", img[:, : w // 2]), ("b", img[:, w // 2 :])):
            tile = Image.fromarray(np.ascontiguousarray(half), "RGB")
            scale = MAX_SIDE / max(tile.size)
            if scale < 1:
                size = (max(1, round(tile.width * scale)), max(1, round(tile.height * scale)))
                tile = tile.resize(size, Image.Resampling.BOX)
            tile.save(OUT / f"{name}_{tag}.png", compress_level=9)


if __name__ == "__main__":
    main()
