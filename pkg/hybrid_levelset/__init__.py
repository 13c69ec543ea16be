"""Plug-in and r-convex hull estimation of planar density level sets.

The sample is split around a kernel density threshold, the largest radius whose
r-convex hull of the high-density points avoids the low-density ones is found by
bisection, and the estimate is the hull at a shrunk radius. `calibrate` tunes the
split by smoothed bootstrap; `run_convergence` scores estimates against the
shipped reference densities.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .calibration import CalibrationConfig
from .calibration import calibrate
from .density import fit_kde
from .estimator import estimate_level_set
from .geometry import PointCloud
from .geometry import RConvexRegion
from .main import main
from .synthref import get_density
from .synthref import run_convergence

__all__ = [
    "CalibrationConfig",
    "PointCloud",
    "RConvexRegion",
    "calibrate",
    "estimate_level_set",
    "fit_kde",
    "get_density",
    "main",
    "run_convergence",
]
