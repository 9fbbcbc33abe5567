"""CIEDE2000 colour difference for colours, images and image pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .spaces import ColourSpace, ColourTriplet, ImageBuffer, convert_array


@dataclass(frozen=True)
class DeltaEMap:
    values: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def mean(self) -> float:
        return float(self.values.mean())


def delta_e_2000_array(lab1, lab2) -> np.ndarray:
    """Vectorised CIEDE2000 over matching ``(..., 3)`` L*a*b* arrays."""
    lab1 = np.asarray(lab1, dtype=np.float64)
    lab2 = np.asarray(lab2, dtype=np.float64)
    if lab1.shape != lab2.shape or lab1.shape[-1] != 3:
        raise ValueError(f"shape mismatch: {lab1.shape} vs {lab2.shape}")
    out = kernels.ciede2000(lab1.reshape(-1, 3), lab2.reshape(-1, 3))
    return out.reshape(lab1.shape[:-1])


def delta_e_2000(a: ColourTriplet, b: ColourTriplet) -> float:
    for t in (a, b):
        if t.space != ColourSpace.LAB:
            raise ValueError(f"delta_e_2000 needs LAB triplets, got {t.space.name}")
    return float(delta_e_2000_array(a.as_array()[None], b.as_array()[None])[0])


def to_lab(img: ImageBuffer) -> np.ndarray:
    return convert_array(img.data, img.space, ColourSpace.LAB)


def delta_e_map(x: ImageBuffer, y: ImageBuffer) -> DeltaEMap:
    if x.data.shape != y.data.shape:
        raise ValueError(f"image dimensions differ: {x.data.shape} vs {y.data.shape}")
    return DeltaEMap(delta_e_2000_array(to_lab(x), to_lab(y)))


def mean_delta_e(x: ImageBuffer, y: ImageBuffer) -> float:
    return delta_e_map(x, y).mean()
