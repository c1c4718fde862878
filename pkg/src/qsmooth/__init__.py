"""Time-symmetric estimation for hybrid classical-quantum systems.

Forward filtering and backward retrodiction for jump-diffusion signals
coupled to finite-dimensional quantum systems under Poissonian and Gaussian
continuous measurements, with a discrete phase-space toolkit, an atomic
magnetometer pipeline, a Hardy's-paradox workbench, and weak-measurement
tomography of the smoothing quasiprobability.
"""

__version__ = "0.1.0"

from .grids import ClassicalGrid, DensityGrid, HybridOperator, hybrid_pairing
from .records import MeasurementRecord, RngStream, sample_poisson_record
from .classical import (
    ClassicalModel,
    ck_step,
    combine_smooth,
    pardoux_forward_step,
    retrodictive_backward_step,
    smooth_record,
    snyder_step,
)
from .output import SmootherOutput

__all__ = [
    "ClassicalGrid",
    "ClassicalModel",
    "DensityGrid",
    "HybridOperator",
    "MeasurementRecord",
    "RngStream",
    "SmootherOutput",
    "ck_step",
    "combine_smooth",
    "hybrid_pairing",
    "pardoux_forward_step",
    "retrodictive_backward_step",
    "sample_poisson_record",
    "smooth_record",
    "snyder_step",
]
