"""Spontaneous decay of a two-level emitter in a structured vacuum.

All rates are expressed in units of the flat-spectrum (Markovian) rate, so
the dipole moment and the physical constants cancel: the supplied spectrum
holds relative LDOS values rho(omega)/rho_free (Purcell factors), and a
spectrum identically 1 decays at unit rate.

The time-dependent rate is

    Gamma(t) = (1/pi) int domega rho(omega) sin[(omega - omega_if) t]
                                            / (omega - omega_if)

which vanishes at t = 0 and, for a spectrum flat across the band, approaches
the Markovian plateau rho(omega_if).  Survival follows by exponentiating the
accumulated rate, |C(t)|^2 = exp[-int_0^t Gamma], and a power-law spectral
measure mu(eps) ~ eps^{d_s} near omega_if turns that into a stretched
exponential exp[-phi t^beta] with beta = 2 - d_s.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid

from cylwave.errors import DomainError, FitError
from cylwave.spectra import PurcellSpectrum

__all__ = [
    "DecayTrace",
    "memory_kernel",
    "decay_rate",
    "survival",
    "fit_stretched",
]


@dataclass(frozen=True)
class DecayTrace:
    """Decay-rate and survival samples plus the stretched-exponential fit."""

    times: np.ndarray
    omega_if: float
    gamma_t: np.ndarray
    survival: np.ndarray | None = None
    beta_fit: float | None = None
    ds_fit: float | None = None
    phi: float | None = None
    r2: float | None = None


def _check_band(spectrum: PurcellSpectrum, omega_if: float, t_max: float):
    om = spectrum.omega
    if not om[0] < omega_if < om[-1]:
        raise DomainError("omega_if must lie inside the spectrum band")
    band = om[-1] - om[0]
    if band * t_max >= np.pi * om.size:
        raise DomainError(
            "spectrum too coarse for the requested time: need "
            "band width * t_max < pi * sample count"
        )


def memory_kernel(spectrum: PurcellSpectrum, omega_if: float, t: float) -> complex:
    """K(t) = -(1/2pi) int domega e^{-i(omega-omega_if)t} rho(omega)."""
    _check_band(spectrum, omega_if, abs(t))
    dw = spectrum.omega - omega_if
    integrand = np.exp(-1j * dw * t) * spectrum.values
    return complex(-np.trapezoid(integrand, spectrum.omega) / (2.0 * np.pi))


def decay_rate(spectrum: PurcellSpectrum, omega_if: float, t_grid) -> DecayTrace:
    """Gamma(t) on t_grid by trapezoidal quadrature of the sinc-weighted LDOS."""
    t_grid = np.asarray(t_grid, dtype=float).ravel()
    if t_grid.size < 2 or np.any(np.diff(t_grid) <= 0) or t_grid[0] < 0:
        raise DomainError("t_grid must be increasing and non-negative")
    _check_band(spectrum, omega_if, float(t_grid[-1]))
    dw = spectrum.omega - omega_if
    gamma = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        # sin(x t)/x extended continuously by t at x = 0
        kernel = np.where(dw == 0, t, np.sin(dw * t) / np.where(dw == 0, 1.0, dw))
        gamma[i] = np.trapezoid(kernel * spectrum.values, spectrum.omega) / np.pi
    return DecayTrace(times=t_grid, omega_if=float(omega_if), gamma_t=gamma)


def survival(trace: DecayTrace) -> DecayTrace:
    """|C(t)|^2 = exp[-int_0^t Gamma(t') dt'], cumulative trapezoid."""
    integral = cumulative_trapezoid(trace.gamma_t, trace.times, initial=0.0)
    return replace(trace, survival=np.exp(-integral))


def fit_stretched(trace: DecayTrace) -> DecayTrace:
    """Fit survival = exp[-phi t^beta] by regressing ln(-ln S) on ln t.

    Records beta, the spectral dimension d_s = 2 - beta, the prefactor phi,
    and the fit R^2.  Requires survival strictly below 1 somewhere and at
    least two decades of usable time samples.
    """
    if trace.survival is None:
        raise DomainError("fit_stretched requires survival; run survival() first")
    t, s = trace.times, trace.survival
    usable = (t > 0) & (s > 0) & (s < 1)
    if not np.any(usable):
        raise FitError("survival never drops below 1; nothing to fit")
    t, s = t[usable], s[usable]
    if t[-1] < 100 * t[0]:
        raise FitError("need >= 2 decades of decaying samples for a stable fit")
    x = np.log(t)
    y = np.log(-np.log(s))
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - fit) ** 2) / ss_tot if ss_tot > 0 else 1.0
    return replace(
        trace,
        beta_fit=float(slope),
        ds_fit=float(2.0 - slope),
        phi=float(np.exp(intercept)),
        r2=float(r2),
    )
