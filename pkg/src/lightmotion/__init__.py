"""Tuning-free camera motion for latent video diffusion, at desk scale.

Schedule math, per-frame camera maps, background-aware latent resampling
with cross-frame alignment, and the renoising correction, all checkable
against an analytic oracle denoiser.
"""

from .camera import CameraParams, MotionField, build_motion_field, preset
from .denoiser import OracleDenoiser, PerturbedOracle
from .pipeline import PipelineConfig, RunTrace, run
from .schedule import NoiseSchedule, build_schedule, ddim_step, forward_noise, snr

__version__ = "0.1.0"

__all__ = [
    "CameraParams",
    "MotionField",
    "build_motion_field",
    "preset",
    "OracleDenoiser",
    "PerturbedOracle",
    "PipelineConfig",
    "RunTrace",
    "run",
    "NoiseSchedule",
    "build_schedule",
    "ddim_step",
    "forward_noise",
    "snr",
]
