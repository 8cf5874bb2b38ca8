"""Tendon-driven continuum robot with a compressible spine.

Simulation (Cosserat rod statics and implicit dynamics), a perturbed twin
plant, learned forward/inverse models (recurrent network + Gaussian process
error regression), and data-efficient control policies built on them.
"""

from .params import RodParams, TendonCommand
from .rod import (
    ConvergenceError,
    OverCompressionError,
    RodState,
    ShootingError,
    ShootingResult,
    SlackTendonError,
    integrate_rod_spatial,
    internal_force,
    shoot_static,
    spine_compression,
    step_dynamic,
    tendon_path_length,
)

__version__ = "0.1.0"

__all__ = [
    "RodParams",
    "TendonCommand",
    "RodState",
    "ShootingResult",
    "ShootingError",
    "ConvergenceError",
    "SlackTendonError",
    "OverCompressionError",
    "integrate_rod_spatial",
    "internal_force",
    "spine_compression",
    "shoot_static",
    "step_dynamic",
    "tendon_path_length",
    "__version__",
]
