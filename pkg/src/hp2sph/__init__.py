"""Spherical harmonic analysis of HEALPix maps.

Two routes are provided: the equal-weight quadrature with optional
Richardson refinement, and a pipeline that interpolates each ring onto a
common longitude grid, doubles the sphere, solves nonuniform-FFT least
squares problems in latitude and converts the bivariate Fourier
coefficients to spherical harmonics.
"""

from .baseline import (
    MapValues,
    analyze_equal_weight,
    estimate_spectral_radius,
    richardson_overshoot,
    richardson_refine,
    synthesize_direct,
)
from .pipeline import (
    HP2SPHPlan,
    PowerSpectrum,
    SplineSpec,
    add_harmonics,
    convergence_study,
    hp2sph_analyze,
    potential_spline_eval,
    potential_spline_exact_alm,
    power_spectrum,
)
from .sphgrid import HealpixGrid, SphCoeffTriangle, build_grid, eval_plm_normalized, eval_ylm

__version__ = "0.1.0"

__all__ = [
    "HealpixGrid",
    "SphCoeffTriangle",
    "build_grid",
    "eval_plm_normalized",
    "eval_ylm",
    "MapValues",
    "analyze_equal_weight",
    "synthesize_direct",
    "richardson_refine",
    "estimate_spectral_radius",
    "richardson_overshoot",
    "HP2SPHPlan",
    "hp2sph_analyze",
    "PowerSpectrum",
    "power_spectrum",
    "SplineSpec",
    "potential_spline_eval",
    "potential_spline_exact_alm",
    "add_harmonics",
    "convergence_study",
]
