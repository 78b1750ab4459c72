"""Parameter sweeps: gap maps, gap detection and system-size scaling fits.

Sweeps work in the reduced frequency d1_bar / lambda, so the absolute length
scale cancels.  A gap is a contiguous frequency interval where the Purcell
factor drops below a threshold (default 1e-2); scaling studies track the
minimum in-gap Purcell factor against the array diameter L (in units of
d1_bar) and decide between exponential e^{-alpha L} and power-law L^{-beta}
suppression by comparing fit quality.

Spectra are memoized in an on-disk cache keyed by geometry, probe position,
polarization, truncation order and frequency grid, so repeated sweeps and
re-runs never recompute a solve.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from cylwave.errors import DomainError
from cylwave.geometry import (
    CylinderArray,
    PointSet,
    build_array,
    crop_to_count,
    eisenstein_primes,
    gaussian_primes,
    honeycomb,
)
from cylwave.scattering import DEFAULT_LMAX, Polarization
from cylwave.spectra import PurcellSpectrum, purcell_spectrum

__all__ = [
    "GapMap",
    "Gap",
    "ScalingFit",
    "DEFAULT_GAP_THRESHOLD",
    "PAPER_FREQ_STEP",
    "point_set",
    "cached_purcell_spectrum",
    "gap_map",
    "detect_gaps",
    "fit_scaling_models",
    "scaling_fit",
    "array_diameter",
]

DEFAULT_GAP_THRESHOLD = 1e-2
PAPER_FREQ_STEP = 7e-4         # reduced-frequency resolution of the maps
_PRIME_NORM_BOUND = 6000       # covers the ~300-site croppings used here


@dataclass(frozen=True)
class GapMap:
    """ln P over (reduced frequency, structure parameter)."""

    x_axis: np.ndarray               # d1_bar / lambda, increasing
    y_axis: np.ndarray               # r / d1_bar or n / n_host, increasing
    values: np.ndarray               # shape (len(y_axis), len(x_axis)), ln P
    polarization: Polarization
    param_axis: str
    failures: tuple = ()


@dataclass(frozen=True)
class Gap:
    """A suppression interval [lo, hi] with its deepest point."""

    lo: float
    hi: float
    min_p: float
    min_at: float


@dataclass(frozen=True)
class ScalingFit:
    """Mid-gap Purcell minima vs array diameter with the selected decay model."""

    sizes: np.ndarray
    midgap_p: np.ndarray
    model: str                       # 'exponential' or 'power'
    exponent: float
    r2_exp: float
    r2_pow: float


def point_set(kind: str, count: int) -> PointSet:
    """The three structure families, cropped to `count` sites about the center."""
    if kind == "honeycomb":
        return honeycomb(count)
    if kind == "eisenstein":
        return crop_to_count(eisenstein_primes(_PRIME_NORM_BOUND), count)
    if kind == "gaussian":
        return crop_to_count(gaussian_primes(_PRIME_NORM_BOUND), count)
    raise DomainError(f"unknown point-set kind {kind!r}")


def _spectrum_key(array, position, freqs, polarization, lmax) -> str:
    h = hashlib.sha256()
    for part in (array.positions, array.radii, array.permittivities, np.asarray(freqs)):
        h.update(np.ascontiguousarray(part).tobytes())
    h.update(np.asarray(array.host_index, dtype=float).tobytes())
    h.update(np.asarray(position, dtype=float).tobytes())
    h.update(f"{polarization.value}:{lmax}".encode())
    return h.hexdigest()


def cached_purcell_spectrum(
    array: CylinderArray,
    position,
    reduced_freqs,
    polarization=Polarization.TM,
    lmax: int = DEFAULT_LMAX,
    d1_bar: float | None = None,
    cache_dir: str | Path | None = None,
) -> PurcellSpectrum:
    """purcell_spectrum with an optional on-disk memo per full frequency grid."""
    if cache_dir is None:
        return purcell_spectrum(array, position, reduced_freqs, polarization, lmax, d1_bar)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    key = _spectrum_key(array, position, reduced_freqs, polarization, lmax)
    path = cache_dir / f"spectrum-{key}.npz"
    if path.exists():
        data = np.load(path)
        return PurcellSpectrum(
            omega=data["omega"], values=data["values"], polarization=polarization,
            position=(float(position[0]), float(position[1])), meta=str(data["meta"]),
        )
    spec = purcell_spectrum(array, position, reduced_freqs, polarization, lmax, d1_bar)
    tmp = path.with_name(path.stem + ".tmp.npz")
    np.savez(tmp, omega=spec.omega, values=spec.values, meta=spec.meta)
    tmp.replace(path)
    return spec


def _array_for_param(ps: PointSet, param_axis: str, value: float, epsilon: float,
                     r_over_d1: float, host_index: float) -> CylinderArray:
    if param_axis == "r_over_d1":
        return build_array(ps, value, epsilon, host_index=host_index)
    if param_axis == "index_contrast":
        # value is n / n_host; the sweep fixes r / d1_bar
        eps = (value * host_index) ** 2
        return build_array(ps, r_over_d1, eps, host_index=host_index)
    raise DomainError(f"unknown parameter axis {param_axis!r}")


def gap_map(
    kind: str,
    count: int,
    param_axis: str,
    param_values,
    freq_axis,
    polarization=Polarization.TM,
    position=(0.0, 0.0),
    epsilon: float = 10.5,
    r_over_d1: float = 0.35,
    host_index: float = 1.0,
    lmax: int = DEFAULT_LMAX,
    cache_dir=None,
) -> GapMap:
    """ln P map over (reduced frequency, structure parameter).

    Rows are independent; a failing row is filled with NaN and recorded in
    `failures` while the sweep continues.
    """
    param_values = np.asarray(param_values, dtype=float)
    freq_axis = np.asarray(freq_axis, dtype=float)
    if param_values.size == 0 or freq_axis.size == 0:
        raise DomainError("axes must be non-empty")
    ps = point_set(kind, count)
    values = np.full((param_values.size, freq_axis.size), np.nan)
    failures = []
    for i, val in enumerate(param_values):
        try:
            arr = _array_for_param(ps, param_axis, float(val), epsilon, r_over_d1, host_index)
            spec = cached_purcell_spectrum(
                arr, position, freq_axis, polarization, lmax,
                d1_bar=ps.d1_bar, cache_dir=cache_dir,
            )
            with np.errstate(divide="ignore"):
                values[i] = np.log(spec.values)
        except Exception as exc:
            failures.append((float(val), repr(exc)))
    return GapMap(
        x_axis=freq_axis, y_axis=param_values, values=values,
        polarization=polarization, param_axis=param_axis, failures=tuple(failures),
    )


def detect_gaps(spectrum: PurcellSpectrum, threshold: float = DEFAULT_GAP_THRESHOLD):
    """Maximal runs of P < threshold, each with its minimum value and location."""
    if threshold <= 0:
        raise DomainError("threshold must be positive")
    below = spectrum.values < threshold
    gaps = []
    i = 0
    n = below.size
    while i < n:
        if not below[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and below[j + 1]:
            j += 1
        seg = slice(i, j + 1)
        k = i + int(np.argmin(spectrum.values[seg]))
        gaps.append(Gap(
            lo=float(spectrum.omega[i]), hi=float(spectrum.omega[j]),
            min_p=float(spectrum.values[k]), min_at=float(spectrum.omega[k]),
        ))
        i = j + 1
    return gaps


def array_diameter(ps: PointSet) -> float:
    """Largest center-to-center distance, in units of d1_bar."""
    pts = ps.points
    r = np.hypot(pts[:, 0], pts[:, 1])
    return float(2.0 * r.max() / ps.d1_bar)


def _linear_fit(x, y):
    slope, intercept = np.polyfit(x, y, 1)
    fit = slope * x + intercept
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum((y - fit) ** 2) / ss_tot if ss_tot > 0 else 1.0
    return slope, float(r2)


def fit_scaling_models(sizes, midgap_p) -> ScalingFit:
    """Fit ln P against L (exponential) and ln L (power); keep the better R^2."""
    sizes = np.asarray(sizes, dtype=float)
    midgap_p = np.asarray(midgap_p, dtype=float)
    if sizes.size < 4:
        raise DomainError("scaling fit needs at least 4 sizes")
    if np.any(midgap_p <= 0):
        raise DomainError("mid-gap Purcell values must be positive")
    log_p = np.log(midgap_p)
    slope_exp, r2_exp = _linear_fit(sizes, log_p)
    slope_pow, r2_pow = _linear_fit(np.log(sizes), log_p)
    if r2_exp >= r2_pow:
        return ScalingFit(sizes, midgap_p, "exponential", float(-slope_exp), r2_exp, r2_pow)
    return ScalingFit(sizes, midgap_p, "power", float(-slope_pow), r2_exp, r2_pow)


def scaling_fit(
    kind: str,
    counts,
    freq_window,
    gap_index: int = 0,
    polarization=Polarization.TM,
    epsilon: float = 10.5,
    r_over_d1: float = 0.35,
    host_index: float = 1.0,
    position=(0.0, 0.0),
    freq_step: float = PAPER_FREQ_STEP,
    threshold: float = DEFAULT_GAP_THRESHOLD,
    lmax: int = DEFAULT_LMAX,
    cache_dir=None,
) -> ScalingFit:
    """Mid-gap scaling across system sizes for the gap_index-th gap in a window.

    Sizes at which the selected gap is absent are dropped with a warning entry
    in the fit input (simply omitted); at least 4 surviving sizes are required.
    """
    import warnings

    lo, hi = map(float, freq_window)
    freqs = np.arange(lo, hi + freq_step / 2, freq_step)
    sizes, minima = [], []
    for count in counts:
        ps = point_set(kind, int(count))
        arr = build_array(ps, r_over_d1, epsilon, host_index=host_index)
        spec = cached_purcell_spectrum(
            arr, position, freqs, polarization, lmax,
            d1_bar=ps.d1_bar, cache_dir=cache_dir,
        )
        gaps = detect_gaps(spec, threshold)
        if len(gaps) <= gap_index:
            warnings.warn(f"gap {gap_index} absent at count {count}; size dropped")
            continue
        sizes.append(array_diameter(ps))
        minima.append(gaps[gap_index].min_p)
    return fit_scaling_models(np.asarray(sizes), np.asarray(minima))


def gap_map_to_csv(gm: GapMap, path):
    """Gridded CSV: one JSON header line, then rows y, ln P(y, x...)."""
    header = json.dumps({
        "x_axis": gm.x_axis.tolist(),
        "param_axis": gm.param_axis,
        "polarization": gm.polarization.value,
        "failures": list(gm.failures),
    })
    with open(path, "w") as fh:
        fh.write("# " + header + "\n")
        for y, row in zip(gm.y_axis, gm.values):
            fh.write(",".join(repr(float(v)) for v in (y, *row)) + "\n")
