"""Low-light video enhancement with visual state space models."""

from ._vmamba import (
    ConfigurationError,
    DimensionError,
    IngestionError,
    NumericError,
    VideoEnhancer,
    chromatic_adapt,
    cross_merge,
    cross_scan,
    discretize,
    enhance_dir,
    estimate_illuminant,
    load_clip,
    lti_scan,
    psnr,
    read_image,
    scan_bench,
    selective_scan,
    ssim,
    train,
    write_image,
)

__all__ = [
    "ConfigurationError",
    "DimensionError",
    "IngestionError",
    "NumericError",
    "VideoEnhancer",
    "chromatic_adapt",
    "cross_merge",
    "cross_scan",
    "discretize",
    "enhance_dir",
    "estimate_illuminant",
    "load_clip",
    "lti_scan",
    "psnr",
    "read_image",
    "scan_bench",
    "selective_scan",
    "ssim",
    "train",
    "write_image",
]
