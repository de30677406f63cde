"""Reference-guided line drawing from color images.

The heavy lifting lives in the C++ extension; this package re-exports it and
adds a few conveniences. A Stable Diffusion backend built on diffusers is in
``mixsa.diffusers_backend`` (optional dependency).
"""

from ._mixsa import (
    AttentionHook,
    Backend,
    MixsaError,
    Pipeline,
    __version__,
    apply_rcd,
    band_errors,
    blend_queries,
    blend_weights,
    canny_contours,
    checkerboard,
    cli_main,
    ddim_step,
    decode_image,
    default_params,
    encode_png,
    fid,
    kid,
    make_schedule,
    mean_drift,
    mixed_attention,
    psnr,
    read_image,
    ssim,
    timestep_subsequence,
    white_fraction,
    write_png,
)

__all__ = [
    "AttentionHook",
    "Backend",
    "MixsaError",
    "Pipeline",
    "__version__",
    "apply_rcd",
    "band_errors",
    "blend_queries",
    "blend_weights",
    "canny_contours",
    "checkerboard",
    "cli_main",
    "ddim_step",
    "decode_image",
    "default_params",
    "encode_png",
    "extract",
    "fid",
    "kid",
    "make_schedule",
    "mean_drift",
    "mixed_attention",
    "psnr",
    "read_image",
    "ssim",
    "timestep_subsequence",
    "white_fraction",
    "write_png",
]


def extract(color, reference, backend="mock", **params):
    """One-shot sketch extraction; returns the sketch as a uint8 array."""
    return Pipeline(backend).extract(color, reference, params)["sketch"]
