"""marsdust: synthesize, remove and measure dust-storm degradations on
orbital images."""

from .degrade import (
    ALPHA_SET,
    AtmosphericLight,
    DatasetManifest,
    PairRecord,
    Reflexivity,
    TransmissionMap,
    estimate_atmospheric_light,
    estimate_reflexivity,
    generate_pairs,
    make_transmission,
    replay_dusty,
    synthesize_dusty,
)
from .metrics import corpus_report, dust_index, psnr, ssim
from .noise import DEFAULT_RANGES, NoiseField, ParamRanges, PerlinParams, perlin2d, sample_params
from .raster import Image, PatchRegion, augment, crop_patch, load_image, save_image
from .restore import RestoreMethod, estimate_transmission, invert_degradation, remove_dust

__version__ = "0.1.0"

__all__ = [
    "ALPHA_SET",
    "AtmosphericLight",
    "DEFAULT_RANGES",
    "DatasetManifest",
    "Image",
    "NoiseField",
    "PairRecord",
    "ParamRanges",
    "PatchRegion",
    "PerlinParams",
    "Reflexivity",
    "RestoreMethod",
    "TransmissionMap",
    "augment",
    "corpus_report",
    "crop_patch",
    "dust_index",
    "estimate_atmospheric_light",
    "estimate_reflexivity",
    "estimate_transmission",
    "generate_pairs",
    "invert_degradation",
    "load_image",
    "make_transmission",
    "perlin2d",
    "psnr",
    "remove_dust",
    "replay_dusty",
    "sample_params",
    "save_image",
    "ssim",
    "synthesize_dusty",
]
