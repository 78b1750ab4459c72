"""Two-photon spontaneous emission enhancement from Purcell spectra.

In a two-photon decay the transition frequency omega_if is split between the
photon pair, and the pair emission density factorizes (for this planar
geometry) into single-photon LDOS enhancements at the two partner
frequencies weighted by the emitter tensor:

    ratio(omega) = sum_ij t_ij(omega) P_i(omega) P_j(omega_if - omega)

with sum_ij t_ij = 1 so free space gives exactly 1.  Frequency grids are
built symmetric about omega_if / 2, making the omega <-> omega_if - omega
pairing exact with no interpolation; the tensor is the emitter's electronic
structure and is supplied as a function of omega.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from cylwave.errors import DomainError
from cylwave.geometry import CylinderArray
from cylwave.scattering import (
    DEFAULT_LMAX,
    LineSource,
    Polarization,
    ScatterSolution,
    _scattered_response,
    assemble_T,
    source_coefficients,
)
from cylwave.spectra import PurcellSpectrum, purcell_spectrum, wavenumber_from_reduced

__all__ = [
    "EmitterModel",
    "TpseSpectrum",
    "vertical_emitter",
    "symmetric_grid",
    "tpse_ratio",
    "tpse_spectrum",
    "tpse_total",
    "purcell_spatial_map",
]

_ORIENTATIONS = (Polarization.TE_X, Polarization.TE_Y, Polarization.TM)


@dataclass(frozen=True)
class EmitterModel:
    """Transition frequency and the normalized emitter tensor t_ij(omega)."""

    omega_if: float
    t_tensor: callable
    description: str = ""

    def tensor_at(self, omega: float) -> np.ndarray:
        t = np.asarray(self.t_tensor(omega), dtype=float)
        if t.shape != (3, 3):
            raise DomainError("emitter tensor must be 3x3")
        if np.any(t < 0):
            raise DomainError("emitter tensor entries must be non-negative")
        if not np.isclose(t.sum(), 1.0, rtol=1e-10, atol=1e-12):
            raise DomainError("emitter tensor must sum to 1")
        return t


def vertical_emitter(omega_if: float, description: str = "vertical (z) transition") -> EmitterModel:
    """Single out-of-plane transition: t = diag(0, 0, 1) at every frequency."""
    t = np.diag([0.0, 0.0, 1.0])
    return EmitterModel(omega_if=float(omega_if), t_tensor=lambda _omega: t, description=description)


@dataclass(frozen=True)
class TpseSpectrum:
    """Enhancement ratio gamma2 / gamma2_free on an omega / omega_if grid."""

    omega_over_if: np.ndarray    # in (0, 1)
    ratio: np.ndarray
    emitter: EmitterModel
    position: tuple[float, float] | None = None

    def __post_init__(self):
        x = np.asarray(self.omega_over_if, dtype=float).ravel()
        r = np.asarray(self.ratio, dtype=float).ravel()
        if x.size != r.size:
            raise DomainError("grid and ratio lengths differ")
        if np.any((x <= 0) | (x >= 1)):
            raise DomainError("omega / omega_if must lie strictly inside (0, 1)")
        if np.any(r < 0):
            raise DomainError("ratio must be non-negative")
        object.__setattr__(self, "omega_over_if", x)
        object.__setattr__(self, "ratio", r)


def symmetric_grid(omega_if: float, resolution: float) -> np.ndarray:
    """Frequencies omega_if/2 +- m*resolution, symmetric and inside (0, omega_if)."""
    if resolution <= 0 or omega_if <= 0:
        raise DomainError("omega_if and resolution must be positive")
    half = omega_if / 2.0
    m_max = int(np.ceil(half / resolution)) - 1
    offsets = resolution * np.arange(-m_max, m_max + 1)
    return half + offsets


def tpse_ratio(p_triple, emitter: EmitterModel, omega: float) -> float:
    """sum_ij t_ij(omega) P_i(omega) P_j(omega_if - omega).

    p_triple holds the (x, y, z) orientation Purcell spectra; entries may be
    None when the emitter tensor never weights that orientation.
    """
    om_if = emitter.omega_if
    if not 0 < omega < om_if:
        raise DomainError("omega must lie strictly between 0 and omega_if")
    t = emitter.tensor_at(omega)
    partner = om_if - omega
    p_at = np.zeros(3)
    p_partner = np.zeros(3)
    for i in range(3):
        needs = np.any(t[i, :] != 0) or np.any(t[:, i] != 0)
        if not needs:
            continue
        if p_triple[i] is None:
            raise DomainError(f"emitter weights orientation {i} but its spectrum is missing")
        p_at[i] = p_triple[i].value_at(omega)
        p_partner[i] = p_triple[i].value_at(partner)
    return float(np.einsum("ij,i,j->", t, p_at, p_partner))


def _needed_orientations(emitter: EmitterModel, grid) -> list[int]:
    needed = set()
    for omega in grid:
        t = emitter.tensor_at(float(omega))
        for i in range(3):
            if np.any(t[i, :] != 0) or np.any(t[:, i] != 0):
                needed.add(i)
    return sorted(needed)


def tpse_spectrum(
    array: CylinderArray,
    position,
    emitter: EmitterModel,
    grid_resolution: float,
    lmax: int = DEFAULT_LMAX,
    d1_bar: float | None = None,
) -> TpseSpectrum:
    """Enhancement spectrum on the symmetric grid about omega_if / 2.

    Frequencies are the reduced d1_bar / lambda; each needed orientation's
    Purcell spectrum is computed once on the grid (the grid is closed under
    omega -> omega_if - omega by construction).
    """
    grid = symmetric_grid(emitter.omega_if, grid_resolution)
    needed = _needed_orientations(emitter, grid)
    p_triple: list[PurcellSpectrum | None] = [None, None, None]
    for i in needed:
        p_triple[i] = purcell_spectrum(
            array, position, grid, polarization=_ORIENTATIONS[i],
            lmax=lmax, d1_bar=d1_bar,
        )
    ratio = np.array([tpse_ratio(p_triple, emitter, float(om)) for om in grid])
    return TpseSpectrum(
        omega_over_if=grid / emitter.omega_if, ratio=ratio, emitter=emitter,
        position=(float(position[0]), float(position[1])),
    )


def tpse_total(spectrum: TpseSpectrum, gamma0_shape) -> float:
    """Total-rate enhancement: shape-weighted average of the ratio over (0, omega_if).

    gamma0_shape(omega / omega_if) is the free-space spectral weight (any
    positive normalization); the result is the trapezoidal integral of
    ratio * shape divided by the integral of shape alone.
    """
    x = spectrum.omega_over_if
    shape = np.asarray([gamma0_shape(float(v)) for v in x], dtype=float)
    if np.any(~np.isfinite(shape)) or np.any(shape < 0):
        raise DomainError("gamma0_shape must be finite and non-negative on the grid")
    denom = np.trapezoid(shape, x)
    if denom <= 0:
        raise DomainError("gamma0_shape integrates to zero; cannot normalize")
    return float(np.trapezoid(spectrum.ratio * shape, x) / denom)


def purcell_spatial_map(
    array: CylinderArray,
    k0: float,
    polarization=Polarization.TM,
    window=((0.0, 1.0), (0.0, 1.0)),
    resolution: float = 0.05,
    lmax: int = DEFAULT_LMAX,
):
    """Purcell factor with the source scanned over a regular grid.

    The transition matrix is assembled and factorized once; every probe point
    only costs a right-hand side and a back-substitution.  Probe points inside
    a cylinder are NaN-masked (line sources are only supported in the host).
    Returns (xs, ys, map) with map shape (len(ys), len(xs)).
    """
    if resolution <= 0:
        raise DomainError("resolution must be positive")
    (x_lo, x_hi), (y_lo, y_hi) = window
    xs = x_lo + resolution * np.arange(int(np.floor((x_hi - x_lo) / resolution)) + 1)
    ys = y_lo + resolution * np.arange(int(np.floor((y_hi - y_lo) / resolution)) + 1)
    out = np.full((ys.size, xs.size), np.nan)
    if len(array) == 0:
        out[:] = 1.0
        return xs, ys, out

    tm = assemble_T(array, k0, polarization, lmax)
    lu, piv = lu_factor(tm.matrix)
    radii = array.radii
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            d = np.hypot(array.positions[:, 0] - x, array.positions[:, 1] - y)
            if np.any(d <= radii):
                continue
            src = LineSource((float(x), float(y)), polarization)
            a0 = source_coefficients(src, array, k0, lmax)
            beta = lu_solve((lu, piv), a0)
            b = beta.reshape(len(array), tm.n_orders) * tm.j_norm
            sol = ScatterSolution(
                array=array, k0=tm.k0, lmax=lmax, polarization=polarization,
                source=src, b=b, residual=0.0,
            )
            out[iy, ix] = 1.0 + _scattered_response(sol, src)
    return xs, ys, out
