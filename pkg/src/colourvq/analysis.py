"""Embedding-space interpretation: lesions, shifts, usage and lesion transforms.

Models are used through a small duck-typed interface, implemented by
:class:`colourvq.vqvae.VqvaeModel`:

* ``K`` and ``output_space``
* ``reconstruct(x, lesion=None)`` -> output-space :class:`ImageBuffer`
* ``code_indices(x)`` -> latent index grid
* ``decode_code(k)`` -> output-space image with vector ``k`` everywhere
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .metrics import delta_e_2000_array, to_lab
from .spaces import ColourSpace, ImageBuffer, convert_array, convert_image, pearson

SINGULAR_THRESHOLD = 0.90
HOMOGENEOUS_THRESHOLD = 0.10


def _check_index(model, k):
    if not 0 <= k < model.K:
        raise IndexError(f"vector index {k} outside [0, {model.K})")


def _fmt(x) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# lesions and chromatic shifts


@dataclass(frozen=True)
class ChromaticShift:
    dL: float
    da: float
    db: float

    @property
    def luminance_dominant(self) -> bool:
        return abs(self.dL) > max(abs(self.da), abs(self.db))


def lesion_reconstruct(model, x: ImageBuffer, k: int) -> ImageBuffer:
    """Reconstruction of ``x`` with vector ``k`` silenced; the model is left untouched."""
    _check_index(model, k)
    return model.reconstruct(x, lesion=k)


def chromatic_shift_lab(full_lab, lesioned_lab) -> ChromaticShift:
    d = (np.asarray(lesioned_lab) - np.asarray(full_lab)).reshape(-1, 3).mean(axis=0)
    return ChromaticShift(float(d[0]), float(d[1]), float(d[2]))


def chromatic_shift(full: ImageBuffer, lesioned: ImageBuffer) -> ChromaticShift:
    """Mean signed L*a*b* difference ``lesioned - full`` over all pixels."""
    if full.data.shape != lesioned.data.shape:
        raise ValueError(f"image dimensions differ: {full.data.shape} vs {lesioned.data.shape}")
    return chromatic_shift_lab(to_lab(full), to_lab(lesioned))


def single_code_reconstruction(model, k: int) -> ImageBuffer:
    """sRGB image decoded from a latent field of vector ``k``, clamped for export."""
    _check_index(model, k)
    img = convert_image(model.decode_code(k), ColourSpace.SRGB)
    return ImageBuffer(np.clip(img.data, 0.0, 1.0), ColourSpace.SRGB)


# --------------------------------------------------------------------------
# code usage


@dataclass(frozen=True)
class UsageHistogram:
    counts: np.ndarray

    @classmethod
    def from_indices(cls, index_grids, K: int) -> "UsageHistogram":
        counts = np.zeros(K, dtype=np.int64)
        for grid in index_grids:
            counts += np.bincount(np.asarray(grid).ravel(), minlength=K)[:K]
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    @property
    def frequency_std(self) -> float:
        return float(np.std(self.frequencies))

    def to_csv(self) -> str:
        lines = ["vector,count,frequency"]
        for k, (c, f) in enumerate(zip(self.counts, self.frequencies)):
            lines.append(f"{k},{int(c)},{_fmt(f)}")
        return "\n".join(lines) + "\n"


def usage_histogram(model, images) -> UsageHistogram:
    images = list(images)
    if not images:
        raise ValueError("usage_histogram needs at least one image")
    return UsageHistogram.from_indices((model.code_indices(x) for x in images), model.K)


@dataclass(frozen=True)
class UsageErrorReport:
    names: list
    frequency_std: list
    error: list
    r: float | None
    degenerate: bool

    def to_csv(self) -> str:
        lines = ["model,frequency_std,error"]
        for n, s, e in zip(self.names, self.frequency_std, self.error):
            lines.append(f"{n},{_fmt(s)},{_fmt(e)}")
        return "\n".join(lines) + "\n"


def usage_error_report(names, frequency_std, error) -> UsageErrorReport:
    """Pair per-model usage spread with error; r only for three or more models."""
    r, degenerate = None, False
    if len(names) >= 3:
        r, degenerate = pearson(frequency_std, error)
    return UsageErrorReport(list(names), list(map(float, frequency_std)), list(map(float, error)), r, degenerate)


def normalised_error(mean_de: float) -> float:
    """Mean CIEDE2000 mapped to [0, 1] by dividing by 100 and clipping."""
    return float(min(max(mean_de / 100.0, 0.0), 1.0))


def reconstruction_delta_e(model, images) -> float:
    """Mean CIEDE2000 of reconstructions against originals, compared in sRGB.

    The reconstruction is brought to sRGB and clamped to the displayable cube
    before comparison with the original image.
    """
    total = 0.0
    for x in images:
        rec = convert_image(model.reconstruct(x), ColourSpace.SRGB)
        rec_lab = convert_array(np.clip(rec.data, 0.0, 1.0), ColourSpace.SRGB, ColourSpace.LAB)
        total += float(delta_e_2000_array(rec_lab, to_lab(x)).mean())
    return total / len(images)


def error_vs_usage(models, images, names=None) -> UsageErrorReport:
    models, images = list(models), list(images)
    names = names or [f"model{i}" for i in range(len(models))]
    stds = [usage_histogram(m, images).frequency_std for m in models]
    errs = [normalised_error(reconstruction_delta_e(m, images)) for m in models]
    return usage_error_report(names, stds, errs)


# --------------------------------------------------------------------------
# lesion transforms


def singularity_index(T) -> float:
    """``1 - |l3| / |l1|`` over eigenvalues of ``T`` sorted by modulus."""
    mods = eigen_norms(T)
    if mods[0] == 0.0:
        raise ValueError("singularity index undefined for the zero matrix")
    return float(min(max(1.0 - mods[2] / mods[0], 0.0), 1.0))


def eigen_norms(T) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {T.shape}")
    return np.sort(np.abs(np.linalg.eigvals(T)))[::-1]


def classify_si(si: float) -> str:
    if si >= SINGULAR_THRESHOLD:
        return "singular"
    if si <= HOMOGENEOUS_THRESHOLD:
        return "homogeneous"
    return "intermediate"


@dataclass(frozen=True)
class LesionTransformReport:
    vector_index: int | None
    T: np.ndarray
    offset: np.ndarray
    r_squared: float
    eigen_norms: np.ndarray
    SI: float
    label: str
    n_pixels: int
    rank_deficient: bool = False

    def csv_row(self) -> list:
        return (
            [self.vector_index]
            + [_fmt(v) for v in self.T.ravel()]
            + [_fmt(v) for v in self.offset]
            + [_fmt(self.r_squared)]
            + [_fmt(v) for v in self.eigen_norms]
            + [_fmt(self.SI), self.label]
        )


TRANSFORM_FIELDS = (
    ["vector"]
    + [f"t{i}{j}" for i in range(3) for j in range(3)]
    + ["o0", "o1", "o2", "r2", "l1", "l2", "l3", "SI", "class"]
)


def fit_lesion_transform_lab(full_lab, lesioned_lab, top_fraction=0.01, vector_index=None):
    """Affine least-squares fit ``lesioned ~ T @ full + offset`` on the most affected pixels.

    Pixels are ranked by CIEDE2000 between the two inputs and the top
    ``top_fraction`` (at least one pixel) is kept. A lesion that changes no
    pixel is reported as the identity with r^2 = 1.
    """
    if not 0.0 < top_fraction <= 1.0:
        raise ValueError("top_fraction must lie in (0, 1]")
    full = np.asarray(full_lab, dtype=np.float64).reshape(-1, 3)
    les = np.asarray(lesioned_lab, dtype=np.float64).reshape(-1, 3)
    if full.shape != les.shape:
        raise ValueError(f"pixel sets differ in size: {full.shape} vs {les.shape}")
    de = delta_e_2000_array(full, les)
    n = max(1, math.ceil(top_fraction * full.shape[0]))

    if not np.any(de > 0):
        T, offset, r2, deficient = np.eye(3), np.zeros(3), 1.0, False
    else:
        pick = np.argsort(-de, kind="stable")[:n]
        X = np.hstack([full[pick], np.ones((n, 1))])
        Y = les[pick]
        deficient = np.linalg.matrix_rank(X) < 4
        coef = np.linalg.pinv(X) @ Y if deficient else np.linalg.lstsq(X, Y, rcond=None)[0]
        T, offset = coef[:3].T, coef[3]
        resid = Y - X @ coef
        ss_res = float((resid**2).sum())
        ss_tot = float(((Y - Y.mean(axis=0)) ** 2).sum())
        if ss_tot > 0:
            r2 = 1.0 - ss_res / ss_tot
        else:
            r2 = 1.0 if ss_res == 0 else 0.0
        r2 = min(max(r2, 0.0), 1.0)

    norms = eigen_norms(T)
    si = singularity_index(T) if norms[0] > 0 else 1.0
    return LesionTransformReport(
        vector_index, T, np.asarray(offset), r2, norms, si, classify_si(si), n, bool(deficient)
    )


def fit_lesion_transform(full: ImageBuffer, lesioned: ImageBuffer, top_fraction=0.01, vector_index=None):
    if full.data.shape != lesioned.data.shape:
        raise ValueError(f"image dimensions differ: {full.data.shape} vs {lesioned.data.shape}")
    return fit_lesion_transform_lab(to_lab(full), to_lab(lesioned), top_fraction, vector_index)


def rgb_cube_lab(samples_per_axis: int) -> np.ndarray:
    """Regular sRGB cube grid converted to L*a*b*, ``samples_per_axis ** 3`` points."""
    if samples_per_axis < 2:
        raise ValueError("samples_per_axis must be at least 2")
    axis = np.linspace(0.0, 1.0, samples_per_axis)
    grid = np.array(list(itertools.product(axis, repeat=3)))
    return convert_array(grid, ColourSpace.SRGB, ColourSpace.LAB)


def apply_transform_to_rgb_cube(T, offset, samples_per_axis: int) -> np.ndarray:
    cube = rgb_cube_lab(samples_per_axis)
    return cube @ np.asarray(T, dtype=np.float64).T + np.asarray(offset, dtype=np.float64)


def points_csv(points) -> str:
    lines = ["L,a,b"]
    lines += [",".join(_fmt(v) for v in p) for p in np.asarray(points)]
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# report files


def shifts_csv(shifts) -> str:
    lines = ["vector,dL,da,db,luminance_dominant"]
    for k, s in enumerate(shifts):
        lines.append(f"{k},{_fmt(s.dL)},{_fmt(s.da)},{_fmt(s.db)},{str(s.luminance_dominant).lower()}")
    return "\n".join(lines) + "\n"


def transforms_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRANSFORM_FIELDS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def read_transforms_csv(text: str) -> list[dict]:
    rows = []
    for row in csv.DictReader(io.StringIO(text)):
        rows.append(
            {
                "vector": int(row["vector"]),
                "T": np.array([float(row[f"t{i}{j}"]) for i in range(3) for j in range(3)]).reshape(3, 3),
                "offset": np.array([float(row[f"o{i}"]) for i in range(3)]),
                "r2": float(row["r2"]),
                "SI": float(row["SI"]),
                "class": row["class"],
            }
        )
    return rows


def shifts_svg(shifts, width=640, height=240) -> str:
    """Grouped bar chart of dL, da, db per vector; luminance-dominant groups get a grey band."""
    k = len(shifts)
    vals = np.array([[s.dL, s.da, s.db] for s in shifts]) if k else np.zeros((0, 3))
    vmax = float(np.abs(vals).max()) if vals.size and np.abs(vals).max() > 0 else 1.0
    margin, mid = 30, height / 2
    group_w = (width - 2 * margin) / max(k, 1)
    bar_w = group_w / 4
    colours = ("#7f7f7f", "#d62728", "#1f77b4")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<line x1="{margin}" y1="{mid}" x2="{width - margin}" y2="{mid}" stroke="black"/>',
    ]
    for i, s in enumerate(shifts):
        x0 = margin + i * group_w
        if s.luminance_dominant:
            out.append(
                f'<rect x="{x0:.2f}" y="{margin / 2:.2f}" width="{group_w:.2f}" '
                f'height="{height - margin:.2f}" fill="#dddddd"/>'
            )
        for j, v in enumerate(vals[i]):
            h = abs(v) / vmax * (mid - margin)
            y = mid - h if v >= 0 else mid
            out.append(
                f'<rect x="{x0 + (j + 0.5) * bar_w:.2f}" y="{y:.2f}" width="{bar_w:.2f}" '
                f'height="{h:.2f}" fill="{colours[j]}"/>'
            )
        out.append(
            f'<text x="{x0 + group_w / 2:.2f}" y="{height - 4}" font-size="11" '
            f'text-anchor="middle">e{i}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
