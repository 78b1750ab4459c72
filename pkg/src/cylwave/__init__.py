"""2D generalized Lorenz-Mie multiple-scattering engine for cylinder arrays.

Computes local density of states (Purcell factors), photonic gap maps,
complex-wavenumber resonant modes, multifractal LDOS statistics, spontaneous
decay dynamics in structured vacua, and two-photon emission enhancement for
finite arrays of dielectric nanocylinders placed on honeycomb lattices or on
the Eisenstein / Gaussian prime point sets.
"""

from cylwave.geometry import (
    PointSet,
    CylinderArray,
    gaussian_primes,
    eisenstein_primes,
    honeycomb,
    crop_to_count,
    mean_nn_distance,
    build_array,
)
from cylwave.scattering import (
    Polarization,
    LineSource,
    assemble_T,
    mie_coefficient,
    source_coefficients,
    solve,
    field_at,
    purcell,
    purcell_combined,
)

__all__ = [
    "PointSet",
    "CylinderArray",
    "gaussian_primes",
    "eisenstein_primes",
    "honeycomb",
    "crop_to_count",
    "mean_nn_distance",
    "build_array",
    "Polarization",
    "LineSource",
    "assemble_T",
    "mie_coefficient",
    "source_coefficients",
    "solve",
    "field_at",
    "purcell",
    "purcell_combined",
]

__version__ = "0.1.0"
