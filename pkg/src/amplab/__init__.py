"""Stochastic amplifier lab.

Simulation and analysis toolkit for the linear heat equation driven by the
square of a homogeneous Gaussian field: field synthesis, direct solves, path
integral estimates, the covariance spectrum along paths with its critical
coupling, extreme-value tail laws, and intermittency diagnostics.
"""

__version__ = "0.1.0"

import os as _os

# AMPLAB_THREADS caps worker threads; BLAS/OpenMP pools read these variables
# when numpy first loads, so they must be set before the submodule imports.
if "AMPLAB_THREADS" in _os.environ:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _os.environ["AMPLAB_THREADS"])

from . import (  # noqa: F401
    diagnostics,
    extremes,
    feynman_kac,
    field_synthesis,
    heat_solver,
    path_spectrum,
    spectral_model,
)
