"""Cylindrical special functions and the Graf addition-theorem translation.

Bessel J and outgoing Hankel H^(+) = J + iY are evaluated on real and complex
arguments through the AMOS routines exposed by scipy, with integer negative
orders handled by the reflection identity F_{-l}(z) = (-1)^l F_l(z) so the
identity holds to machine precision.

The translation step implements, for |r - d| < |d|,

    H_m(k|r|) e^{i m arg r}
        = sum_l H_{m-l}(k|d|) e^{i(m-l) arg d} J_l(k|r-d|) e^{i l arg(r-d)}

where d is the vector from the old origin to the new one.
"""

from __future__ import annotations

import numpy as np
from scipy.special import hankel1, jv, yv

from cylwave.errors import DomainError

__all__ = ["bessel_j", "hankel_plus", "graf_matrix", "graf_translate"]


def bessel_j(order: int, z):
    """Cylindrical Bessel J_l(z) for integer order (negative orders by reflection)."""
    order = int(order)
    if order < 0:
        return (-1) ** (-order) * jv(-order, z)
    return jv(order, z)


def hankel_plus(order: int, z):
    """Outgoing Hankel function H_l(z) = J_l(z) + i Y_l(z); singular at z = 0."""
    order = int(order)
    if np.any(np.asarray(z) == 0):
        raise DomainError("Hankel function is singular at z = 0")
    if order < 0:
        return (-1) ** (-order) * hankel1(-order, z)
    return hankel1(order, z)


def bessel_j_orders(lmax: int, z):
    """J_l(z) for l = -lmax..lmax, stacked along a new leading axis."""
    z = np.asarray(z)
    pos = np.stack([jv(l, z) for l in range(lmax + 1)])
    signs = np.array([(-1) ** l for l in range(1, lmax + 1)])
    neg = pos[1:] * signs.reshape((-1,) + (1,) * z.ndim)
    return np.concatenate([neg[::-1], pos])


def hankel_plus_orders(lmax: int, z):
    """H_l(z) for l = -lmax..lmax, stacked along a new leading axis."""
    z = np.asarray(z)
    if np.any(z == 0):
        raise DomainError("Hankel function is singular at z = 0")
    if np.isrealobj(z):
        # real-argument fast path (Cephes J and Y instead of complex AMOS)
        pos = np.stack([jv(l, z) + 1j * yv(l, z) for l in range(lmax + 1)])
    else:
        pos = np.stack([hankel1(l, z) for l in range(lmax + 1)])
    signs = np.array([(-1) ** l for l in range(1, lmax + 1)])
    neg = pos[1:] * signs.reshape((-1,) + (1,) * z.ndim)
    return np.concatenate([neg[::-1], pos])


def graf_matrix(displacement, wavenumber, lmax_out: int, lmax_in: int) -> np.ndarray:
    """Outgoing-to-regular translation matrix M with c_out = M @ c_in.

    c_in are coefficients of H_m(k|r|) e^{i m arg r} about the old origin
    (m = -lmax_in..lmax_in); c_out are coefficients of the regular series
    J_l(k|r - d|) e^{i l arg(r - d)} about the new origin at `displacement`
    (l = -lmax_out..lmax_out), valid for field points with |r - d| < |d|.
    """
    d = np.asarray(displacement, dtype=float)
    rho = float(np.hypot(d[0], d[1]))
    if rho == 0:
        raise DomainError("translation displacement must be nonzero")
    if wavenumber == 0:
        raise DomainError("wavenumber must be nonzero")
    phi = np.arctan2(d[1], d[0])
    # M[l, m] = H_{m-l}(k rho) e^{i (m-l) phi}
    m_idx = np.arange(-lmax_in, lmax_in + 1)
    l_idx = np.arange(-lmax_out, lmax_out + 1)
    diff = m_idx[None, :] - l_idx[:, None]
    h = hankel_plus_orders(lmax_in + lmax_out, wavenumber * rho)
    return h[diff + lmax_in + lmax_out] * np.exp(1j * diff * phi)


def graf_translate(coeffs, displacement, wavenumber, lmax: int) -> np.ndarray:
    """Re-expand an outgoing multipole series about a displaced origin.

    coeffs holds the outgoing coefficients for orders -L..L where
    2L + 1 = len(coeffs).  Returns the regular (Bessel) coefficients for
    orders -lmax..lmax about the displaced origin.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    if coeffs.ndim != 1 or coeffs.size % 2 != 1:
        raise DomainError("coeffs must be a 1-d vector of odd length (orders -L..L)")
    lmax_in = coeffs.size // 2
    return graf_matrix(displacement, wavenumber, lmax, lmax_in) @ coeffs
