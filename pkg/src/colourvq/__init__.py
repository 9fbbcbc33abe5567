"""Colour-space conversions, CIEDE2000, a small autodiff engine and a VQ-VAE
for studying how colour representations shape learned codebooks."""

from .kernels import active_backend
from .metrics import DeltaEMap, delta_e_2000, delta_e_map, mean_delta_e
from .spaces import (
    ColourSpace,
    ColourTriplet,
    CorrelationReport,
    ImageBuffer,
    channel_correlations,
    convert_image,
    convert_triplet,
)
from .vqvae import (
    Codebook,
    LatentField,
    VqvaeConfig,
    VqvaeModel,
    build_model,
    forward,
    load_checkpoint,
    quantize,
    save_checkpoint,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "active_backend",
    "ColourSpace",
    "ColourTriplet",
    "CorrelationReport",
    "ImageBuffer",
    "channel_correlations",
    "convert_image",
    "convert_triplet",
    "DeltaEMap",
    "delta_e_2000",
    "delta_e_map",
    "mean_delta_e",
    "Codebook",
    "LatentField",
    "VqvaeConfig",
    "VqvaeModel",
    "build_model",
    "forward",
    "load_checkpoint",
    "quantize",
    "save_checkpoint",
    "train",
]
