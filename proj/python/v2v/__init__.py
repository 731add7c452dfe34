"""Zero-shot video-to-video translation with a toy diffusion backend."""

from ._v2v import (
    default_config,
    estimate_flow,
    key_frame_indices,
    occlusion_mask,
    pixel_mse,
    roundtrip_error_curve,
    synthetic_video,
    translate,
    warp,
)

__all__ = [
    "default_config",
    "estimate_flow",
    "key_frame_indices",
    "occlusion_mask",
    "pixel_mse",
    "roundtrip_error_curve",
    "synthetic_video",
    "translate",
    "warp",
]
