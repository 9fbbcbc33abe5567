"""Colour space conversions among sRGB, linear RGB, LMS, CIE L*a*b*, DKL and HSV.

Linear RGB is the hub: every image conversion decodes to linear RGB and
re-encodes into the destination space. Array functions operate on the last
axis of ``(..., 3)`` arrays; the triplet helpers wrap them for single colours
and check space tags.

Matrices
--------
* linear RGB -> XYZ: IEC 61966-2-1 primaries, D65 white taken as the image
  of RGB (1, 1, 1) so white maps exactly to L* = 100.
* XYZ -> LMS: Hunt-Pointer-Estevez, rows rescaled so white -> (1, 1, 1).
* LMS -> DKL: (L+M)/2, L-M, S-(L+M)/2, with the two chromatic axes scaled so
  the sRGB cube spans [-1, 1] on each.
* HSV is the hexcone model over gamma-encoded sRGB values.
"""

from __future__ import annotations

import enum
import itertools
import zlib
from dataclasses import dataclass, field

import numpy as np


class ColourSpace(enum.IntEnum):
    """Space tag; integer values are the on-disk ``u8`` encoding."""

    SRGB = 0
    LINEAR_RGB = 1
    LMS = 2
    LAB = 3
    DKL = 4
    HSV = 5

    @classmethod
    def parse(cls, name: "str | ColourSpace") -> "ColourSpace":
        if isinstance(name, ColourSpace):
            return name
        key = str(name).strip().lower()
        if key in _ALIASES:
            return _ALIASES[key]
        raise ValueError(f"unknown colour space {name!r}; expected one of {sorted(_ALIASES)}")

    @property
    def short_name(self) -> str:
        return _SHORT[self]


_ALIASES = {
    "rgb": ColourSpace.SRGB,
    "srgb": ColourSpace.SRGB,
    "linear_rgb": ColourSpace.LINEAR_RGB,
    "linrgb": ColourSpace.LINEAR_RGB,
    "lms": ColourSpace.LMS,
    "lab": ColourSpace.LAB,
    "dkl": ColourSpace.DKL,
    "hsv": ColourSpace.HSV,
}
_SHORT = {
    ColourSpace.SRGB: "rgb",
    ColourSpace.LINEAR_RGB: "linear_rgb",
    ColourSpace.LMS: "lms",
    ColourSpace.LAB: "lab",
    ColourSpace.DKL: "dkl",
    ColourSpace.HSV: "hsv",
}

# --------------------------------------------------------------------------
# constant matrices

RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_RGB = np.linalg.inv(RGB_TO_XYZ)
WHITE_XYZ = RGB_TO_XYZ.sum(axis=1)

_HPE = np.array(
    [
        [0.38971, 0.68898, -0.07868],
        [-0.22981, 1.18340, 0.04641],
        [0.00000, 0.00000, 1.00000],
    ]
)
_rgb_to_lms = _HPE @ RGB_TO_XYZ
RGB_TO_LMS = _rgb_to_lms / _rgb_to_lms.sum(axis=1, keepdims=True)
LMS_TO_RGB = np.linalg.inv(RGB_TO_LMS)

_opponent = np.array([[0.5, 0.5, 0.0], [1.0, -1.0, 0.0], [-0.5, -0.5, 1.0]])
_cube = np.array(list(itertools.product((0.0, 1.0), repeat=3)))
_raw_dkl = _opponent @ RGB_TO_LMS
_chroma_scale = np.abs(_cube @ _raw_dkl.T).max(axis=0)
_chroma_scale[0] = 1.0
LMS_TO_DKL = _opponent / _chroma_scale[:, None]
RGB_TO_DKL = LMS_TO_DKL @ RGB_TO_LMS
DKL_TO_RGB = np.linalg.inv(RGB_TO_DKL)

# Per-space network normalisation bounds: (low, high) per channel.
GAMUT_BOUNDS = {
    ColourSpace.SRGB: ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
    ColourSpace.LINEAR_RGB: ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
    ColourSpace.LMS: ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
    ColourSpace.LAB: ((0.0, 100.0), (-128.0, 128.0), (-128.0, 128.0)),
    ColourSpace.DKL: ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0)),
    ColourSpace.HSV: ((0.0, 360.0), (0.0, 1.0), (0.0, 1.0)),
}

_EPS = 216.0 / 24389.0
_KAPPA = 24389.0 / 27.0

# --------------------------------------------------------------------------
# array kernels


def srgb_to_linear(a):
    """sRGB electro-optical transfer; input is clamped to [0, 1] first."""
    a = np.clip(np.asarray(a, dtype=np.float64), 0.0, 1.0)
    return np.where(a <= 0.04045, a / 12.92, ((a + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(a):
    """Inverse transfer, extended odd-symmetrically so out-of-gamut values survive."""
    a = np.asarray(a, dtype=np.float64)
    m = np.abs(a)
    enc = np.where(m <= 0.0031308, 12.92 * m, 1.055 * m ** (1.0 / 2.4) - 0.055)
    return np.copysign(enc, a)


def _apply(matrix, a):
    return np.asarray(a, dtype=np.float64) @ matrix.T


def linear_to_xyz(a):
    return _apply(RGB_TO_XYZ, a)


def xyz_to_linear(a):
    return _apply(XYZ_TO_RGB, a)


def _lab_f(t):
    return np.where(t > _EPS, np.cbrt(t), (_KAPPA * t + 16.0) / 116.0)


def _lab_finv(f):
    f3 = f**3
    return np.where(f3 > _EPS, f3, (116.0 * f - 16.0) / _KAPPA)


def linear_to_lab(a):
    xyz = linear_to_xyz(a) / WHITE_XYZ
    fx, fy, fz = (_lab_f(xyz[..., i]) for i in range(3))
    return np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)


def lab_to_linear(a):
    a = np.asarray(a, dtype=np.float64)
    fy = (a[..., 0] + 16.0) / 116.0
    fx = fy + a[..., 1] / 500.0
    fz = fy - a[..., 2] / 200.0
    xyz = np.stack([_lab_finv(fx), _lab_finv(fy), _lab_finv(fz)], axis=-1) * WHITE_XYZ
    return xyz_to_linear(xyz)


def linear_to_lms(a):
    return _apply(RGB_TO_LMS, a)


def lms_to_linear(a):
    return _apply(LMS_TO_RGB, a)


def linear_to_dkl(a):
    return _apply(RGB_TO_DKL, a)


def dkl_to_linear(a):
    return _apply(DKL_TO_RGB, a)


def srgb_to_hsv(a):
    """Hexcone HSV; hue in degrees [0, 360), hue is 0 where saturation is 0."""
    a = np.asarray(a, dtype=np.float64)
    r, g, b = a[..., 0], a[..., 1], a[..., 2]
    v = np.max(a, axis=-1)
    c = v - np.min(a, axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(
        v == r,
        ((g - b) / safe_c) % 6.0,
        np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0),
    )
    h = np.where(c > 0, 60.0 * h, 0.0)
    h = np.where(h >= 360.0, h - 360.0, h)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_srgb(a):
    a = np.asarray(a, dtype=np.float64)
    h = np.mod(a[..., 0], 360.0) / 60.0
    s, v = a[..., 1], a[..., 2]
    k = lambda n: np.mod(n + h, 6.0)  # noqa: E731
    f = lambda n: v - v * s * np.clip(np.minimum(k(n), 4.0 - k(n)), 0.0, 1.0)  # noqa: E731
    return np.stack([f(5.0), f(3.0), f(1.0)], axis=-1)


_TO_LINEAR = {
    ColourSpace.SRGB: srgb_to_linear,
    ColourSpace.LINEAR_RGB: lambda a: np.asarray(a, dtype=np.float64),
    ColourSpace.LMS: lms_to_linear,
    ColourSpace.LAB: lab_to_linear,
    ColourSpace.DKL: dkl_to_linear,
    ColourSpace.HSV: lambda a: srgb_to_linear(hsv_to_srgb(a)),
}
_FROM_LINEAR = {
    ColourSpace.SRGB: linear_to_srgb,
    ColourSpace.LINEAR_RGB: lambda a: np.asarray(a, dtype=np.float64),
    ColourSpace.LMS: linear_to_lms,
    ColourSpace.LAB: linear_to_lab,
    ColourSpace.DKL: linear_to_dkl,
    ColourSpace.HSV: lambda a: srgb_to_hsv(linear_to_srgb(a)),
}


def convert_array(a, src, dst):
    """Convert a ``(..., 3)`` array from ``src`` to ``dst`` through linear RGB."""
    src, dst = ColourSpace.parse(src), ColourSpace.parse(dst)
    a = np.asarray(a, dtype=np.float64)
    if src == dst:
        return a.copy()
    # sRGB <-> HSV needs no trip through the transfer function
    if src == ColourSpace.SRGB and dst == ColourSpace.HSV:
        return srgb_to_hsv(a)
    if src == ColourSpace.HSV and dst == ColourSpace.SRGB:
        return hsv_to_srgb(a)
    return _FROM_LINEAR[dst](_TO_LINEAR[src](a))


def out_of_gamut(linear_rgb, tol=1e-9):
    """Boolean mask of linear-RGB values falling outside the unit cube."""
    a = np.asarray(linear_rgb)
    return np.any((a < -tol) | (a > 1.0 + tol), axis=-1)


# --------------------------------------------------------------------------
# single colours


@dataclass(frozen=True)
class ColourTriplet:
    c0: float
    c1: float
    c2: float
    space: ColourSpace
    clamped: bool = False
    out_of_gamut: bool = False

    @classmethod
    def of(cls, values, space, **flags) -> "ColourTriplet":
        c0, c1, c2 = (float(v) for v in values)
        return cls(c0, c1, c2, ColourSpace.parse(space), **flags)

    def as_array(self) -> np.ndarray:
        return np.array([self.c0, self.c1, self.c2])


def _expect(t: ColourTriplet, space: ColourSpace) -> np.ndarray:
    if t.space != space:
        raise ValueError(f"expected a {space.name} triplet, got {t.space.name}")
    return t.as_array()


def srgb_decode(t: ColourTriplet) -> ColourTriplet:
    a = _expect(t, ColourSpace.SRGB)
    clamped = bool(np.any((a < 0.0) | (a > 1.0)))
    return ColourTriplet.of(srgb_to_linear(a), ColourSpace.LINEAR_RGB, clamped=clamped)


def srgb_encode(t: ColourTriplet) -> ColourTriplet:
    a = _expect(t, ColourSpace.LINEAR_RGB)
    return ColourTriplet.of(
        linear_to_srgb(a), ColourSpace.SRGB, out_of_gamut=bool(out_of_gamut(a))
    )


def _forward_op(fn, dst):
    def op(t: ColourTriplet) -> ColourTriplet:
        return ColourTriplet.of(fn(_expect(t, ColourSpace.LINEAR_RGB)), dst)

    return op


def _inverse_op(fn, src):
    def op(t: ColourTriplet) -> ColourTriplet:
        rgb = fn(_expect(t, src))
        return ColourTriplet.of(
            rgb, ColourSpace.LINEAR_RGB, out_of_gamut=bool(out_of_gamut(rgb))
        )

    return op


rgb_to_lab = _forward_op(linear_to_lab, ColourSpace.LAB)
lab_to_rgb = _inverse_op(lab_to_linear, ColourSpace.LAB)
rgb_to_lms = _forward_op(linear_to_lms, ColourSpace.LMS)
lms_to_rgb = _inverse_op(lms_to_linear, ColourSpace.LMS)
rgb_to_dkl = _forward_op(linear_to_dkl, ColourSpace.DKL)
dkl_to_rgb = _inverse_op(dkl_to_linear, ColourSpace.DKL)


def rgb_to_hsv(t: ColourTriplet) -> ColourTriplet:
    """HSV of a gamma-encoded sRGB triplet."""
    return ColourTriplet.of(srgb_to_hsv(_expect(t, ColourSpace.SRGB)), ColourSpace.HSV)


def hsv_to_rgb(t: ColourTriplet) -> ColourTriplet:
    return ColourTriplet.of(hsv_to_srgb(_expect(t, ColourSpace.HSV)), ColourSpace.SRGB)


def convert_triplet(t: ColourTriplet, dst) -> ColourTriplet:
    dst = ColourSpace.parse(dst)
    return ColourTriplet.of(convert_array(t.as_array(), t.space, dst), dst)


# --------------------------------------------------------------------------
# images


@dataclass
class ImageBuffer:
    """An ``H x W x 3`` float64 raster tagged with its colour space."""

    data: np.ndarray
    space: ColourSpace = ColourSpace.SRGB
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ValueError(f"image data must be H x W x 3, got shape {self.data.shape}")
        if self.data.shape[0] < 1 or self.data.shape[1] < 1:
            raise ValueError("image must have at least one pixel")
        self.space = ColourSpace.parse(self.space)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def copy(self) -> "ImageBuffer":
        return ImageBuffer(self.data.copy(), self.space, dict(self.meta))


def convert_image(img: ImageBuffer, dst) -> ImageBuffer:
    dst = ColourSpace.parse(dst)
    if dst == img.space:
        return ImageBuffer(img.data.copy(), dst)
    return ImageBuffer(convert_array(img.data, img.space, dst), dst)


def _bounds(space) -> tuple[np.ndarray, np.ndarray]:
    try:
        b = np.array(GAMUT_BOUNDS[ColourSpace.parse(space)])
    except (KeyError, ValueError, TypeError):
        raise ValueError(f"no gamut bounds for colour space {space!r}") from None
    return b[:, 0], b[:, 1]


def normalize_array(a, space):
    lo, hi = _bounds(space)
    return (np.asarray(a, dtype=np.float64) - lo) / (hi - lo)


def denormalize_array(a, space):
    lo, hi = _bounds(space)
    return np.asarray(a, dtype=np.float64) * (hi - lo) + lo


def normalize_for_network(img: ImageBuffer) -> ImageBuffer:
    """Map each channel affinely into [0, 1] using the gamut-bounds table.

    The result keeps the source tag; callers track that values are normalised.
    """
    return ImageBuffer(normalize_array(img.data, img.space), img.space)


def denormalize_from_network(img: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(denormalize_array(img.data, img.space), img.space)


def gamut_bounds_csv() -> str:
    lines = ["space,channel,low,high"]
    for space, bounds in GAMUT_BOUNDS.items():
        for ch, (lo, hi) in enumerate(bounds):
            lines.append(f"{space.short_name},{ch},{lo!r},{hi!r}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# channel statistics


@dataclass(frozen=True)
class CorrelationReport:
    space: ColourSpace
    r01: float
    r02: float
    r12: float
    sample_count: int
    degenerate: tuple = (False, False, False)

    def mean_abs(self) -> float:
        return (abs(self.r01) + abs(self.r02) + abs(self.r12)) / 3.0


def pearson(x, y) -> tuple[float, bool]:
    """Pearson r and a degeneracy flag (set, with r = 0, when either side is constant)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    # tolerance absorbs round-off in the spread of a constant channel
    scale = max(np.abs(x).max(), np.abs(y).max(), 1.0) * 1e-12 * np.sqrt(len(x))
    if sx <= scale or sy <= scale:
        return 0.0, True
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0)), False


def sample_pixels(images, pixels_per_image: int, seed: int) -> np.ndarray:
    """Pooled random pixel sample, ``pixels_per_image`` from each image.

    Each image draws from a generator keyed on the seed and the image's own
    bytes, so the pool does not depend on list order.
    """
    chunks = []
    for img in images:
        flat = img.data.reshape(-1, 3)
        key = zlib.crc32(np.ascontiguousarray(img.data).tobytes())
        rng = np.random.default_rng([seed, key, int(img.space)])
        replace = flat.shape[0] < pixels_per_image
        idx = rng.choice(flat.shape[0], size=pixels_per_image, replace=replace)
        chunks.append(flat[np.sort(idx)])
    pool = np.concatenate(chunks)
    # canonical row order so the pooled statistics are order independent
    order = np.lexsort(pool.T[::-1])
    return pool[order]


def channel_correlations(images, space, pixels_per_image: int = 100, seed: int = 0):
    if pixels_per_image < 2:
        raise ValueError("pixels_per_image must be at least 2")
    images = list(images)
    if not images:
        raise ValueError("channel_correlations needs at least one image")
    space = ColourSpace.parse(space)
    src = images[0].space
    if all(img.space == src for img in images):
        pool = convert_array(sample_pixels(images, pixels_per_image, seed), src, space)
    else:
        converted = [convert_image(img, space) for img in images]
        pool = sample_pixels(converted, pixels_per_image, seed)
    r01, d01 = pearson(pool[:, 0], pool[:, 1])
    r02, d02 = pearson(pool[:, 0], pool[:, 2])
    r12, d12 = pearson(pool[:, 1], pool[:, 2])
    return CorrelationReport(space, r01, r02, r12, int(pool.shape[0]), (d01, d02, d12))
