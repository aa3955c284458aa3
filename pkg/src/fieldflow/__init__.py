"""Field-strength enhancement of 3D MRI volumes with rectified flow.

A conditioned 3D velocity network is trained with a band-weighted
spatial-frequency loss and sampled with an Euler ODE solver.
"""

from fieldflow.fasrm import BandSpec, FasrmConfig, LossBreakdown, build_bands, fasfl_gradient, fasfl_loss
from fieldflow.flow import FlowState, SamplerConfig, euler_enhance, interpolate, sample_noise, velocity_target
from fieldflow.fourier import FftPlan, dft3_forward, dft3_inverse, naive_dft3
from fieldflow.metrics import MetricsReport, nrmse, psnr, ssim
from fieldflow.task import FieldTask
from fieldflow.volume import Spectrum3D, Volume3D, linf_distance, new_volume

__version__ = "0.1.0"

__all__ = [
    "BandSpec",
    "FasrmConfig",
    "FftPlan",
    "FieldTask",
    "FlowState",
    "LossBreakdown",
    "MetricsReport",
    "SamplerConfig",
    "Spectrum3D",
    "Volume3D",
    "build_bands",
    "dft3_forward",
    "dft3_inverse",
    "euler_enhance",
    "fasfl_gradient",
    "fasfl_loss",
    "interpolate",
    "linf_distance",
    "naive_dft3",
    "new_volume",
    "nrmse",
    "psnr",
    "sample_noise",
    "ssim",
    "velocity_target",
]
