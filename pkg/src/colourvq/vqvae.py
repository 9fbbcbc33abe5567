"""Colour-converting VQ-VAE: model, quantiser, loss, training and checkpoints.

Architecture (``h`` = hidden channels, ``D`` = embedding dimension)::

    encoder  conv4x4/2 (3->h) ReLU, conv4x4/2 (h->h) ReLU, conv1x1 (h->D)
    quantise nearest live codebook row per latent position
    decoder  conv3x3 (D->h) ReLU, up x2, conv3x3 (h->h) ReLU, up x2, conv3x3 (h->3)

Inputs and targets live in the network range given by
:func:`colourvq.spaces.normalize_array`; the loss is taken there.
"""

from __future__ import annotations

import csv
import io
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from . import engine as E
from . import kernels
from .io_utils import atomic_write_bytes, atomic_write_text
from .metrics import delta_e_2000_array
from .spaces import (
    ColourSpace,
    ImageBuffer,
    convert_array,
    convert_image,
    denormalize_array,
    normalize_array,
)

log = logging.getLogger(__name__)

DOWNSAMPLE = 4
CHECKPOINT_MAGIC = b"VQCC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class VqvaeConfig:
    K: int = 8
    D: int = 8
    input_space: ColourSpace = ColourSpace.SRGB
    output_space: ColourSpace = ColourSpace.SRGB
    hidden_channels: int = 32
    image_side: int = 32
    epochs: int = 30
    learning_rate: float = 2e-4
    beta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_space", ColourSpace.parse(self.input_space))
        object.__setattr__(self, "output_space", ColourSpace.parse(self.output_space))
        if self.K < 2:
            raise ValueError("K must be at least 2")
        if self.D < 1:
            raise ValueError("D must be at least 1")
        if self.hidden_channels < 1:
            raise ValueError("hidden_channels must be at least 1")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.image_side < DOWNSAMPLE or self.image_side % DOWNSAMPLE:
            raise ValueError(f"image_side must be a positive multiple of {DOWNSAMPLE}")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")

    @property
    def latent_side(self) -> int:
        return self.image_side // DOWNSAMPLE

    @property
    def name(self) -> str:
        return f"{self.input_space.short_name}2{self.output_space.short_name}"


def parameter_shapes(cfg: VqvaeConfig) -> list[tuple[str, tuple]]:
    """Network parameters in checkpoint order (codebook excluded)."""
    h, d = cfg.hidden_channels, cfg.D
    return [
        ("enc1.weight", (h, 3, 4, 4)),
        ("enc1.bias", (h,)),
        ("enc2.weight", (h, h, 4, 4)),
        ("enc2.bias", (h,)),
        ("enc_proj.weight", (d, h, 1, 1)),
        ("enc_proj.bias", (d,)),
        ("dec_in.weight", (h, d, 3, 3)),
        ("dec_in.bias", (h,)),
        ("dec1.weight", (h, h, 3, 3)),
        ("dec1.bias", (h,)),
        ("dec_out.weight", (3, h, 3, 3)),
        ("dec_out.bias", (3,)),
    ]


@dataclass
class Codebook:
    vectors: E.Parameter
    lesion_mask: np.ndarray

    @property
    def K(self) -> int:
        return self.vectors.shape[0]

    @property
    def D(self) -> int:
        return self.vectors.shape[1]

    def lookup(self) -> np.ndarray:
        """Codebook rows as read by the quantiser: lesioned rows are zero."""
        return np.where(self.lesion_mask[:, None], 0.0, self.vectors.data)

    def with_lesion(self, k: int) -> "Codebook":
        mask = self.lesion_mask.copy()
        mask[k] = True
        return Codebook(self.vectors, mask)


@dataclass
class LatentField:
    z_e: np.ndarray  # (Hl, Wl, D)
    z_q: np.ndarray
    indices: np.ndarray  # (Hl, Wl)


def quantize(z_e, codebook: Codebook) -> LatentField:
    """Nearest live codebook row per position; ties go to the lowest index."""
    z_e = np.asarray(z_e, dtype=np.float64)
    if z_e.shape[-1] != codebook.D:
        raise ValueError(f"latent dimension {z_e.shape[-1]} != codebook D {codebook.D}")
    if codebook.lesion_mask.all():
        raise ValueError("every codebook vector is lesioned")
    flat = z_e.reshape(-1, codebook.D)
    idx = kernels.nearest_code(flat, codebook.vectors.data, codebook.lesion_mask)
    z_q = codebook.lookup()[idx]
    return LatentField(z_e, z_q.reshape(z_e.shape), idx.reshape(z_e.shape[:-1]))


@dataclass
class LossBreakdown:
    reconstruction: float
    codebook_term: float
    commitment_term: float
    total: float
    beta: float


class VqvaeModel:
    def __init__(self, cfg: VqvaeConfig, params: dict, codebook: Codebook):
        self.config = cfg
        self.params = params
        self.codebook = codebook

    @property
    def K(self) -> int:
        return self.config.K

    def parameters(self) -> list:
        return [*self.params.values(), self.codebook.vectors]

    def with_lesion(self, k: int) -> "VqvaeModel":
        """A view sharing parameters, with vector ``k`` silenced."""
        if not 0 <= k < self.K:
            raise IndexError(f"vector index {k} outside [0, {self.K})")
        return VqvaeModel(self.config, self.params, self.codebook.with_lesion(k))

    # analysis interface -------------------------------------------------

    @property
    def output_space(self) -> ColourSpace:
        return self.config.output_space

    def reconstruct(self, x: ImageBuffer, lesion: int | None = None) -> ImageBuffer:
        model = self if lesion is None else self.with_lesion(lesion)
        return forward(model, x)[0]

    def code_indices(self, x: ImageBuffer) -> np.ndarray:
        return forward(self, x)[1].indices

    def decode_code(self, k: int) -> ImageBuffer:
        """Decode a latent field holding vector ``k`` at every position."""
        if not 0 <= k < self.K:
            raise IndexError(f"vector index {k} outside [0, {self.K})")
        side = self.config.latent_side
        return decode_latent_indices(self, np.full((side, side), k))

    # graph pieces -------------------------------------------------------

    def encode(self, x):
        p = self.params
        h = E.relu(E.conv2d(x, p["enc1.weight"], p["enc1.bias"], stride=2, padding=1))
        h = E.relu(E.conv2d(h, p["enc2.weight"], p["enc2.bias"], stride=2, padding=1))
        return E.conv2d(h, p["enc_proj.weight"], p["enc_proj.bias"])

    def decode(self, z):
        # replicate padding: a constant latent field decodes to a constant image
        p = self.params
        h = E.relu(E.conv2d(z, p["dec_in.weight"], p["dec_in.bias"], padding=1, pad_mode="edge"))
        h = E.upsample_nearest(h, 2)
        h = E.relu(E.conv2d(h, p["dec1.weight"], p["dec1.bias"], padding=1, pad_mode="edge"))
        h = E.upsample_nearest(h, 2)
        return E.conv2d(h, p["dec_out.weight"], p["dec_out.bias"], padding=1, pad_mode="edge")

    def graph(self, x_norm, indices=None):
        """Build the forward graph on a ``(1, 3, S, S)`` normalised input.

        When ``indices`` is given the quantiser is bypassed and those code
        assignments are used, which makes the whole loss differentiable for
        gradient checks.
        """
        z_e = self.encode(x_norm)  # (1, D, Hl, Wl)
        _, d, hl, wl = z_e.shape
        z_flat = E.reshape(E.transpose(z_e, (0, 2, 3, 1)), (hl * wl, d))
        if indices is None:
            indices = quantize(z_flat.data, self.codebook).indices
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        e = E.gather_rows(self.codebook.vectors, indices, self.codebook.lesion_mask)
        # straight-through: value of z_q, gradient path of z_e
        st = E.add(z_flat, E.stop_gradient(E.sub(e, z_flat)))
        z_dec = E.transpose(E.reshape(st, (1, hl, wl, d)), (0, 3, 1, 2))
        out = self.decode(z_dec)
        return {"z_e": z_flat, "e": e, "out": out, "indices": indices.reshape(hl, wl)}


def _init_params(cfg: VqvaeConfig, rng) -> dict:
    params = {}
    for name, shape in parameter_shapes(cfg):
        if name.endswith(".bias"):
            data = np.zeros(shape)
        else:
            # He-uniform, suited to the ReLU stacks
            fan_in = int(np.prod(shape[1:]))
            bound = np.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        params[name] = E.Parameter(data, name)
    return params


def build_model(cfg: VqvaeConfig, seed: int | None = None) -> VqvaeModel:
    seed = cfg.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    params = _init_params(cfg, rng)
    vectors = rng.uniform(-1.0 / cfg.K, 1.0 / cfg.K, size=(cfg.K, cfg.D))
    codebook = Codebook(E.Parameter(vectors, "codebook"), np.zeros(cfg.K, dtype=bool))
    return VqvaeModel(cfg, params, codebook)


# --------------------------------------------------------------------------
# forward / loss


def _to_input_tensor(model: VqvaeModel, x: ImageBuffer):
    cfg = model.config
    if x.space != cfg.input_space:
        x = convert_image(x, cfg.input_space)
    if x.height != cfg.image_side or x.width != cfg.image_side:
        raise ValueError(
            f"image is {x.height}x{x.width}, model expects {cfg.image_side}x{cfg.image_side}"
        )
    norm = normalize_array(x.data, cfg.input_space)
    return E.constant(norm.transpose(2, 0, 1)[None])


def _output_image(model: VqvaeModel, out) -> ImageBuffer:
    space = model.config.output_space
    data = denormalize_array(out.data[0].transpose(1, 2, 0), space)
    return ImageBuffer(data, space)


def _latent(g, codebook: Codebook) -> LatentField:
    hl, wl = g["indices"].shape
    d = codebook.D
    return LatentField(g["z_e"].data.reshape(hl, wl, d), g["e"].data.reshape(hl, wl, d), g["indices"])


def forward(model: VqvaeModel, x: ImageBuffer):
    """Reconstruct ``x`` (any tag; converted to the input space) in the output space."""
    g = model.graph(_to_input_tensor(model, x))
    return _output_image(model, g["out"]), _latent(g, model.codebook)


def decode_latent_indices(model: VqvaeModel, indices) -> ImageBuffer:
    """Decode a field of code indices into an output-space image."""
    indices = np.asarray(indices, dtype=np.int64)
    hl, wl = indices.shape
    z = model.codebook.lookup()[indices]  # (Hl, Wl, D)
    out = model.decode(E.constant(z.transpose(2, 0, 1)[None]))
    return _output_image(model, out)


def loss_terms(out, target, z_e, e, beta):
    """Tensor-valued reconstruction, codebook and commitment terms plus total.

    Squared norms are summed over the embedding axis and averaged over
    positions; reconstruction is the mean squared error in network range.
    """
    recon = E.mse(out, target)
    codebook_term = E.mean(E.tsum(E.square(E.sub(E.stop_gradient(z_e), e)), axis=1))
    commitment = E.mean(E.tsum(E.square(E.sub(z_e, E.stop_gradient(e))), axis=1))
    total = E.add(E.add(recon, codebook_term), E.scale(commitment, beta))
    return recon, codebook_term, commitment, total


def _breakdown(terms, beta) -> LossBreakdown:
    recon, cb, cm, total = (t.item() for t in terms)
    return LossBreakdown(recon, cb, cm, total, beta)


def vq_loss(x_target: ImageBuffer, x_pred: ImageBuffer, latent: LatentField, beta: float) -> LossBreakdown:
    """Loss values for an already computed reconstruction and latent field."""
    if x_target.data.shape != x_pred.data.shape:
        raise ValueError("target and reconstruction differ in shape")
    if latent.z_e.shape != latent.z_q.shape:
        raise ValueError("z_e and z_q differ in shape")
    space = x_pred.space
    target = normalize_array(convert_array(x_target.data, x_target.space, space), space)
    pred = normalize_array(x_pred.data, space)
    d = latent.z_e.shape[-1]
    terms = loss_terms(
        E.constant(pred),
        E.constant(target),
        E.constant(latent.z_e.reshape(-1, d)),
        E.constant(latent.z_q.reshape(-1, d)),
        beta,
    )
    return _breakdown(terms, beta)


def model_loss(model: VqvaeModel, x: ImageBuffer, target: ImageBuffer | None = None, indices=None):
    """Graph and loss tensors for one sample; target defaults to ``x`` converted."""
    cfg = model.config
    if target is None:
        target = convert_image(x, cfg.output_space)
    elif target.space != cfg.output_space:
        target = convert_image(target, cfg.output_space)
    g = model.graph(_to_input_tensor(model, x), indices=indices)
    t = E.constant(normalize_array(target.data, cfg.output_space).transpose(2, 0, 1)[None])
    terms = loss_terms(g["out"], t, g["z_e"], g["e"], cfg.beta)
    return g, terms


# --------------------------------------------------------------------------
# training


@dataclass
class EpochRecord:
    epoch: int
    recon: float
    codebook_term: float
    commitment: float
    total: float
    mean_delta_e: float


@dataclass
class TrainingLog:
    records: list = field(default_factory=list)

    CSV_FIELDS = ("epoch", "recon", "codebook_term", "commitment", "total", "mean_delta_e")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for r in self.records:
            w.writerow([r.epoch] + [repr(float(getattr(r, f))) for f in self.CSV_FIELDS[1:]])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainingLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        return cls(
            [
                EpochRecord(int(r["epoch"]), *(float(r[f]) for f in cls.CSV_FIELDS[1:]))
                for r in rows
            ]
        )

    def write_csv(self, path):
        atomic_write_text(path, self.to_csv())


def train(model: VqvaeModel, dataset, cfg: VqvaeConfig | None = None, progress=None) -> TrainingLog:
    """Adam on the full loss, batch size 1, seeded shuffling every epoch.

    Targets are produced from each input by colour conversion. The per-epoch
    record averages loss terms and the CIEDE2000 error of the reconstructions
    seen while training that epoch.
    """
    cfg = model.config if cfg is None else cfg
    images = list(dataset)
    if not images:
        raise ValueError("training dataset is empty")
    for img in images:
        if img.height != cfg.image_side or img.width != cfg.image_side:
            raise ValueError(f"dataset image {img.height}x{img.width} != image_side {cfg.image_side}")

    inputs = [_to_input_tensor(model, img) for img in images]
    targets = [convert_image(img, cfg.output_space) for img in images]
    target_norm = [
        E.constant(normalize_array(t.data, cfg.output_space).transpose(2, 0, 1)[None]) for t in targets
    ]
    target_lab = [convert_array(t.data, cfg.output_space, ColourSpace.LAB) for t in targets]

    params = model.parameters()
    state = E.AdamState(learning_rate=cfg.learning_rate)
    rng = np.random.default_rng([cfg.seed, 1])
    log_ = TrainingLog()
    for epoch in range(1, cfg.epochs + 1):
        sums = np.zeros(5)
        for i in rng.permutation(len(images)):
            E.zero_grads(params)
            g = model.graph(inputs[i])
            terms = loss_terms(g["out"], target_norm[i], g["z_e"], g["e"], cfg.beta)
            terms[3].backward()
            pred = denormalize_array(g["out"].data[0].transpose(1, 2, 0), cfg.output_space)
            pred_lab = convert_array(pred, cfg.output_space, ColourSpace.LAB)
            de = delta_e_2000_array(pred_lab, target_lab[i]).mean()
            sums += [t.item() for t in terms] + [de]
            if cfg.learning_rate > 0:
                E.adam_step(params, state)
        sums /= len(images)
        rec = EpochRecord(epoch, *map(float, sums))
        log_.records.append(rec)
        log.info("epoch %d total=%.5f dE=%.3f", epoch, rec.total, rec.mean_delta_e)
        if progress is not None:
            progress(rec)
    return log_


# --------------------------------------------------------------------------
# checkpoints

_HEADER = struct.Struct("<4sIIIIIBBdQ")


def checkpoint_bytes(model: VqvaeModel) -> bytes:
    cfg = model.config
    parts = [
        _HEADER.pack(
            CHECKPOINT_MAGIC,
            CHECKPOINT_VERSION,
            cfg.K,
            cfg.D,
            cfg.hidden_channels,
            cfg.image_side,
            int(cfg.input_space),
            int(cfg.output_space),
            float(cfg.beta),
            int(cfg.seed),
        ),
        np.ascontiguousarray(model.codebook.vectors.data, dtype="<f8").tobytes(),
    ]
    for name, _ in parameter_shapes(cfg):
        parts.append(np.ascontiguousarray(model.params[name].data, dtype="<f8").tobytes())
    parts.append(model.codebook.lesion_mask.astype(np.uint8).tobytes())
    return b"".join(parts)


def save_checkpoint(model: VqvaeModel, path) -> None:
    atomic_write_bytes(path, checkpoint_bytes(model))


def inspect_checkpoint(raw: bytes) -> VqvaeConfig:
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"checkpoint truncated: {len(raw)} bytes, header needs {_HEADER.size}")
    magic, version, K, D, hidden, side, tin, tout, beta, seed = _HEADER.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic {magic!r}; not a VQCC checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})")
    try:
        return VqvaeConfig(
            K=K,
            D=D,
            input_space=ColourSpace(tin),
            output_space=ColourSpace(tout),
            hidden_channels=hidden,
            image_side=side,
            beta=beta,
            seed=seed,
        )
    except ValueError as exc:
        raise CheckpointError(f"invalid checkpoint header: {exc}") from None


def checkpoint_from_bytes(raw: bytes) -> VqvaeModel:
    cfg = inspect_checkpoint(raw)
    shapes = [("codebook", (cfg.K, cfg.D))] + parameter_shapes(cfg)
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for _, s in shapes) + cfg.K
    if len(raw) != expected:
        raise CheckpointError(
            f"checkpoint has {len(raw)} bytes, expected {expected} for K={cfg.K} D={cfg.D} "
            f"hidden={cfg.hidden_channels}"
        )
    offset = _HEADER.size
    arrays = {}
    for name, shape in shapes:
        n = int(np.prod(shape))
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape).copy()
        offset += 8 * n
    mask = np.frombuffer(raw, dtype=np.uint8, count=cfg.K, offset=offset)
    if np.any(mask > 1):
        raise CheckpointError("lesion mask bytes must be 0 or 1")
    params = {name: E.Parameter(arrays[name], name) for name, _ in parameter_shapes(cfg)}
    codebook = Codebook(E.Parameter(arrays["codebook"], "codebook"), mask.astype(bool))
    return VqvaeModel(cfg, params, codebook)


def load_checkpoint(path) -> VqvaeModel:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        return checkpoint_from_bytes(raw)
    except CheckpointError as exc:
        raise CheckpointError(f"{path}: {exc}") from None


def config_dict(cfg: VqvaeConfig) -> dict:
    d = asdict(cfg)
    d["input_space"] = cfg.input_space.short_name
    d["output_space"] = cfg.output_space.short_name
    return d


__all__ = [
    "VqvaeConfig",
    "VqvaeModel",
    "Codebook",
    "LatentField",
    "LossBreakdown",
    "TrainingLog",
    "EpochRecord",
    "CheckpointError",
    "build_model",
    "quantize",
    "forward",
    "vq_loss",
    "model_loss",
    "loss_terms",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]
