"""Purcell (relative LDOS) spectra on frequency grids.

The spectrum values are Purcell factors, i.e. the LDOS at the probe position
divided by the free-space LDOS at the same frequency.  Frequencies are kept
as the dimensionless d1_bar / lambda used throughout, with the physical
wavenumber recoverable through the array's d1_bar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cylwave.errors import DomainError
from cylwave.geometry import CylinderArray
from cylwave.scattering import (
    DEFAULT_LMAX,
    LineSource,
    Polarization,
    purcell_at,
    purcell_combined,
)

__all__ = ["PurcellSpectrum", "purcell_spectrum", "wavenumber_from_reduced"]


@dataclass(frozen=True)
class PurcellSpectrum:
    """P(omega) sampled on a strictly increasing frequency axis."""

    omega: np.ndarray
    values: np.ndarray
    polarization: Polarization | None = None
    position: tuple[float, float] | None = None
    meta: str = ""

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float).ravel()
        vals = np.asarray(self.values, dtype=float).ravel()
        if om.size != vals.size or om.size < 2:
            raise DomainError("omega and values must be equal-length (>= 2)")
        if np.any(np.diff(om) <= 0):
            raise DomainError("frequency axis must be strictly increasing")
        if not (np.all(np.isfinite(om)) and np.all(np.isfinite(vals))):
            raise DomainError("spectrum entries must be finite")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.omega.size

    def value_at(self, omega: float) -> float:
        """Exact-grid lookup; interpolation is refused by design."""
        idx = np.searchsorted(self.omega, omega)
        for i in (idx - 1, idx, idx + 1):
            if 0 <= i < self.omega.size and np.isclose(
                self.omega[i], omega, rtol=1e-12, atol=1e-12 * max(1.0, abs(omega))
            ):
                return float(self.values[i])
        raise DomainError(f"frequency {omega} is not on the spectrum grid")


def wavenumber_from_reduced(reduced: float, d1_bar: float) -> float:
    """Free-space k (um^-1) from the reduced frequency d1_bar / lambda."""
    if d1_bar <= 0:
        raise DomainError("d1_bar must be positive")
    return 2.0 * np.pi * reduced / d1_bar


def purcell_spectrum(
    array: CylinderArray,
    position,
    reduced_freqs,
    polarization=Polarization.TM,
    lmax: int = DEFAULT_LMAX,
    d1_bar: float | None = None,
    weights=None,
) -> PurcellSpectrum:
    """Purcell factor versus reduced frequency d1_bar / lambda at one point.

    With `weights` given, the three dipole orientations are combined; otherwise
    a single polarization is probed.  Failures at individual frequencies
    propagate (sweep-level error policy lives in the atlas module).
    """
    reduced = np.asarray(reduced_freqs, dtype=float).ravel()
    if d1_bar is None:
        if len(array) == 0:
            raise DomainError("d1_bar must be given for an empty array")
        from cylwave.geometry import mean_nn_distance

        d1_bar = mean_nn_distance(array.positions)
    pos = (float(position[0]), float(position[1]))
    vals = np.empty(reduced.size)
    for i, f in enumerate(reduced):
        k0 = wavenumber_from_reduced(f, d1_bar)
        if weights is not None:
            vals[i] = purcell_combined(array, pos, k0, weights=weights)
        else:
            src = LineSource(pos, polarization)
            vals[i] = purcell_at(array, src, k0, lmax)
    return PurcellSpectrum(
        omega=reduced, values=vals, polarization=None if weights is not None else polarization,
        position=pos, meta=f"d1_bar={d1_bar}",
    )
