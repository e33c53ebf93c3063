"""Event-based frame interpolation with ad-hoc deblurring.

Physical-model pipeline (event simulation, double-integral deblurring,
event-driven interpolation), voxel-grid encodings, image metrics and a
toy-scale bidirectional recurrent network built on a small autodiff core.
"""

from .events import (
    Event,
    EventStream,
    FormatError,
    polarity_image,
    polarity_sum,
    read_events,
    reverse,
    slice_events,
    write_events,
)
from .physical import ExposedFrame, blurry_interpolate, edi_deblur, interpolate_latent
from .quality import BlurProtocol, charbonnier, psnr, ssim, synthesize_blur
from .simulator import FrameSequence, SimConfig, estimate_threshold, simulate
from .voxel import VoxelGrid, bidirectional_pair, exposure_voxel, subvoxel, voxelize

__version__ = "0.1.0"

__all__ = [
    "Event",
    "EventStream",
    "FormatError",
    "polarity_image",
    "polarity_sum",
    "read_events",
    "reverse",
    "slice_events",
    "write_events",
    "ExposedFrame",
    "blurry_interpolate",
    "edi_deblur",
    "interpolate_latent",
    "BlurProtocol",
    "charbonnier",
    "psnr",
    "ssim",
    "synthesize_blur",
    "FrameSequence",
    "SimConfig",
    "estimate_threshold",
    "simulate",
    "VoxelGrid",
    "bidirectional_pair",
    "exposure_voxel",
    "subvoxel",
    "voxelize",
]
