# SPDX-License-Identifier: Apache-2.0
"""DDPM training/sampling with multi-condition low-pass guidance.

Thin python layer over the C++ core; images cross the boundary as 2-D
numpy arrays of float64 (row-major, [height, width]).
"""

from phantomdiff._core import (  # noqa: F401
    ConfigFailure,
    Denoiser,
    IoFailure,
    NumericFailure,
    Schedule,
    analytic_gaussian_denoiser,
    box_downsample,
    denormalize_from_model,
    frechet,
    gen_anatomy,
    load_checkpoint,
    lowpass,
    normalize_for_model,
    q_sample,
    read_imgf,
    refine,
    render_phantom,
    reverse_mean,
    sample_guided,
    sample_unconditional,
    set_ssim,
    ssim,
    to_window,
    write_imgf,
)

__all__ = [
    "ConfigFailure",
    "Denoiser",
    "IoFailure",
    "NumericFailure",
    "Schedule",
    "analytic_gaussian_denoiser",
    "box_downsample",
    "denormalize_from_model",
    "frechet",
    "gen_anatomy",
    "load_checkpoint",
    "lowpass",
    "normalize_for_model",
    "q_sample",
    "read_imgf",
    "refine",
    "render_phantom",
    "reverse_mean",
    "sample_guided",
    "sample_unconditional",
    "set_ssim",
    "ssim",
    "to_window",
    "write_imgf",
]

__version__ = "0.1.0"
