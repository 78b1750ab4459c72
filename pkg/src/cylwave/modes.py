"""Resonant-mode search in the complex wavenumber plane.

A mode of the open structure is a complex k for which the transition matrix
is singular, det[T(k)] = 0.  Re(k) is the free-space wavenumber of the mode
and Im(k) < 0 its decay rate (outgoing convention), so the quality factor is
Q = |Re(k) / (2 Im(k))|.  The search works on log|det T|, evaluated through
an LU factorization so ~10^3-dimensional matrices never overflow, and the
mode profile is taken from the smallest singular direction of T at the root.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from cylwave.errors import DomainError, RefinementError
from cylwave.geometry import CylinderArray
from cylwave.scattering import (
    DEFAULT_LMAX,
    Polarization,
    ScatterSolution,
    assemble_T,
    field_at,
)

__all__ = [
    "ModeRecord",
    "DetMap",
    "quality_factor",
    "log_abs_det",
    "det_map",
    "refine_mode",
    "mode_field",
    "mode_spatial_extent",
    "attach_field",
]


@dataclass(frozen=True)
class ModeRecord:
    """A refined resonance: complex wavenumber, quality factor, optional field."""

    k_tilde: complex
    q_factor: float
    field: np.ndarray | None = None
    mse: float | None = None
    label: str = ""

    def __post_init__(self):
        if self.k_tilde.imag >= 0:
            warnings.warn(
                "mode with Im(k) >= 0 stored; not a decaying resonance",
                stacklevel=2,
            )

    @property
    def decaying(self) -> bool:
        return self.k_tilde.imag < 0


@dataclass(frozen=True)
class DetMap:
    """log|det T| sampled on a (Re k, log10 -Im k) grid; failures hold NaN."""

    re_grid: np.ndarray
    im_log10_grid: np.ndarray
    values: np.ndarray              # shape (len(im_log10_grid), len(re_grid))
    polarization: Polarization
    lmax: int
    failures: tuple = ()


def quality_factor(k_tilde: complex) -> float:
    """Q = |Re(k) / (2 Im(k))|; infinite on the real axis."""
    if k_tilde.imag == 0:
        return np.inf
    return abs(k_tilde.real / (2.0 * k_tilde.imag))


def log_abs_det(array: CylinderArray, k_tilde: complex, polarization, lmax: int) -> float:
    """log|det T(k)| via LU with log-scaled accumulation (no overflow)."""
    tm = assemble_T(array, k_tilde, polarization, lmax)
    sign, logdet = np.linalg.slogdet(tm.matrix)
    if sign == 0:
        return -np.inf
    return float(logdet)


def det_map(
    array: CylinderArray,
    re_range,
    im_range_log10,
    re_step: float,
    im_logstep: float,
    polarization=Polarization.TM,
    lmax: int = DEFAULT_LMAX,
) -> DetMap:
    """Map log|det T| over Re(k) in re_range and Im(k) = -10^a, a in im_range_log10.

    Grid-point failures are recorded in `failures` and marked NaN; the sweep
    continues.
    """
    if re_step <= 0 or im_logstep <= 0:
        raise DomainError("grid steps must be positive")
    re_lo, re_hi = map(float, re_range)
    a_lo, a_hi = map(float, im_range_log10)
    if not (re_lo < re_hi and a_lo < a_hi):
        raise DomainError("ranges must be increasing intervals")
    re_grid = np.arange(re_lo, re_hi + re_step / 2, re_step)
    a_grid = np.arange(a_lo, a_hi + im_logstep / 2, im_logstep)

    values = np.full((a_grid.size, re_grid.size), np.nan)
    failures = []
    for i, a in enumerate(a_grid):
        for j, re in enumerate(re_grid):
            k = complex(re, -10.0 ** a)
            try:
                values[i, j] = log_abs_det(array, k, polarization, lmax)
            except Exception as exc:  # per-point, recorded, not fatal
                failures.append((k, repr(exc)))
    return DetMap(
        re_grid=re_grid, im_log10_grid=a_grid, values=values,
        polarization=polarization, lmax=lmax, failures=tuple(failures),
    )


def refine_mode(
    array: CylinderArray,
    k_seed: complex,
    polarization=Polarization.TM,
    lmax: int = DEFAULT_LMAX,
    step_tol: float = 1e-9,
    max_iter: int = 600,
    label: str = "",
) -> ModeRecord:
    """Refine a complex-k seed to a root of det T by simplex descent.

    Works in (Re k, log10(-Im k)) so ultra-narrow resonances remain resolvable.
    Seeds on or above the real axis are started at Im(k) = -1e-4 Re(k).
    Raises a refinement error carrying the best-so-far record on
    non-convergence.
    """
    k_seed = complex(k_seed)
    if k_seed.real <= 0:
        raise DomainError("mode search requires Re(k_seed) > 0")
    im0 = k_seed.imag if k_seed.imag < 0 else -1e-4 * k_seed.real
    x0 = np.array([k_seed.real, np.log10(-im0)])

    def objective(x):
        # below ~eps * Re(k) the imaginary part is lost to rounding in the
        # matrix entries, so log|det| goes flat and the simplex could drift
        # down the log-Im axis forever; wall it off
        if x[1] < np.log10(np.finfo(float).eps * abs(x[0])):
            return np.inf
        k = complex(x[0], -10.0 ** x[1])
        try:
            return log_abs_det(array, k, polarization, lmax)
        except Exception:
            return np.inf

    simplex = np.array([x0, x0 + [5e-4 * x0[0], 0.0], x0 + [0.0, 0.35]])
    res = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "xatol": step_tol,
            "fatol": np.inf,
            "maxiter": max_iter,
            "maxfev": 2 * max_iter,
        },
    )
    k_best = complex(res.x[0], -10.0 ** res.x[1])
    record = ModeRecord(k_tilde=k_best, q_factor=quality_factor(k_best), label=label)
    if not res.success:
        raise RefinementError(
            f"mode refinement did not converge in {max_iter} iterations "
            f"(best k = {k_best})",
            best=record,
        )
    return record


def _mode_vectors(array, k_tilde, polarization, lmax, degeneracy_ratio=1.5):
    """Smallest singular direction(s) of T(k); two if nearly degenerate."""
    tm = assemble_T(array, k_tilde, polarization, lmax)
    _, sv, vh = np.linalg.svd(tm.matrix)
    vectors = [vh[-1].conj()]
    if sv.size > 1 and sv[-2] < degeneracy_ratio * sv[-1]:
        warnings.warn(
            "near-degenerate null space of T; returning both candidate modes",
            stacklevel=3,
        )
        vectors.append(vh[-2].conj())
    # singular vectors solve the Bessel-normalized system; physical b = beta J
    n, norders = len(array), 2 * lmax + 1
    return [v.reshape(n, norders) * tm.j_norm for v in vectors], tm


def mode_field(
    array: CylinderArray,
    mode: ModeRecord | complex,
    window,
    resolution: float,
    polarization=Polarization.TM,
    lmax: int = DEFAULT_LMAX,
):
    """Render the mode's working field (E_z for TM) on a regular grid.

    window = ((x_min, x_max), (y_min, y_max)); grid nodes sit on integer
    multiples of `resolution` from the window corner, so coarser grids are
    subsets of finer ones.  Output is normalized to unit maximum modulus.
    Returns (xs, ys, field) with field shape (len(ys), len(xs)); for a
    near-degenerate root the field carries a leading axis of length 2.
    """
    if resolution <= 0:
        raise DomainError("resolution must be positive")
    k_tilde = mode.k_tilde if isinstance(mode, ModeRecord) else complex(mode)
    (x_lo, x_hi), (y_lo, y_hi) = window
    xs = x_lo + resolution * np.arange(int(np.floor((x_hi - x_lo) / resolution)) + 1)
    ys = y_lo + resolution * np.arange(int(np.floor((y_hi - y_lo) / resolution)) + 1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])

    b_list, _ = _mode_vectors(array, k_tilde, polarization, lmax)
    grids = []
    for b in b_list:
        sol = ScatterSolution(
            array=array, k0=k_tilde, lmax=lmax, polarization=polarization,
            source=None, b=b, residual=0.0,
        )
        grid = field_at(sol, pts).reshape(len(ys), len(xs))
        peak = np.abs(grid).max()
        if peak == 0:
            raise DomainError("mode field is identically zero on the window")
        grids.append(grid / peak)
    field = grids[0] if len(grids) == 1 else np.stack(grids)
    return xs, ys, field


def mode_spatial_extent(field: np.ndarray, cell_area: float) -> float:
    """Inverse participation measure: int |E|^4 / (int |E|^2)^2, units 1/area.

    Scale-invariant in the field amplitude; a uniform field over area A gives
    exactly 1/A.
    """
    if cell_area <= 0:
        raise DomainError("cell_area must be positive")
    mag2 = np.abs(np.asarray(field)) ** 2
    total2 = mag2.sum() * cell_area
    if total2 == 0:
        raise DomainError("mode spatial extent of an all-zero field is undefined")
    total4 = (mag2 ** 2).sum() * cell_area
    return float(total4 / total2 ** 2)


def attach_field(mode: ModeRecord, field: np.ndarray, cell_area: float) -> ModeRecord:
    """Return a copy of the record with the rendered field and its MSE stored."""
    return replace(mode, field=field, mse=mode_spatial_extent(field, cell_area))
