"""Acceptance suite: one test per headline requirement.

Each test prints one pass/fail line under `pytest -v`.  Heavy sweeps go
through the on-disk spectrum cache in `.cache-acceptance/` at the repo root,
so the first full run takes on the order of an hour and reruns take seconds.
"""

import json
from dataclasses import replace

import numpy as np
import pytest

from cylwave.atlas import (
    DEFAULT_GAP_THRESHOLD,
    PAPER_FREQ_STEP,
    cached_purcell_spectrum,
    detect_gaps,
    array_diameter,
    fit_scaling_models,
    point_set,
    scaling_fit,
)
from cylwave.dynamics import decay_rate, fit_stretched, survival
from cylwave.geometry import CylinderArray, build_array
from cylwave.mdfa import Signal, fluctuation, mdfa, profile
from cylwave.errors import RefinementError
from cylwave.modes import (
    ModeRecord,
    attach_field,
    log_abs_det,
    mode_field,
    mode_spatial_extent,
    quality_factor,
    refine_mode,
)
from cylwave.scattering import (
    LineSource,
    Polarization,
    assemble_T,
    field_at,
    mie_coefficients_orders,
    purcell_at,
    single_cylinder_purcell_tm,
    solve,
    source_coefficients,
)
from cylwave.spectra import PurcellSpectrum, purcell_spectrum
from cylwave.tpse import symmetric_grid, tpse_ratio, tpse_spectrum, vertical_emitter

from pathlib import Path

CACHE = str(Path(__file__).resolve().parents[1] / ".cache-acceptance")

EPSILON = 10.5
R_OVER_D1 = 0.35                    # diameter 154 nm at d1 = 220 nm
COUNTS = {"honeycomb": 298, "eisenstein": 276, "gaussian": 264}
FUND_BAND = (0.2, 0.301)            # gap [0.73, 1.1] um at d1 = 220 nm
FUND_WINDOW = np.arange(0.18, 0.32 + PAPER_FREQ_STEP / 2, PAPER_FREQ_STEP)
HIGH_WINDOW = np.arange(0.30, 0.55 + PAPER_FREQ_STEP / 2, PAPER_FREQ_STEP)
# gap intervals of the full-size arrays, measured at the 7e-4 step:
# the fundamental suppression band and the deepest higher-frequency one
FUND_BANDS = {"honeycomb": (0.2003, 0.2612),
              "eisenstein": (0.2122, 0.2514),
              "gaussian": (0.2073, 0.2619)}
HIGH_BANDS = {"honeycomb": (0.3651, 0.4421),
              "eisenstein": (0.4099, 0.4491),
              "gaussian": (0.4246, 0.4491)}
# system-size ladders for the gap-depth scaling fits; gaussian 168 is
# excluded because at that count r = 0.35 d1_bar overlaps the minimum
# prime spacing
SIZES = {"honeycomb": (54, 74, 96, 130, 150, 186, 216, 242, 260, 298),
         "eisenstein": (60, 84, 108, 132, 156, 180, 204, 228, 252, 276),
         "gaussian": (60, 72, 96, 120, 144, 180, 216, 240, 264)}


def fundamental_spectrum(kind):
    ps = point_set(kind, COUNTS[kind])
    arr = build_array(ps, R_OVER_D1, EPSILON)
    spec = cached_purcell_spectrum(arr, (0.0, 0.0), FUND_WINDOW,
                                   Polarization.TM, 2, d1_bar=ps.d1_bar,
                                   cache_dir=CACHE)
    return ps, arr, spec


@pytest.fixture(scope="session")
def spectra300():
    return {kind: fundamental_spectrum(kind) for kind in COUNTS}


# ------------------------------------------------------------ fast criteria

def test_free_space_identity():
    empty = CylinderArray(np.zeros((0, 2)), np.zeros(0), np.zeros(0))
    freqs = np.linspace(0.05, 0.6, 1000)
    spec = purcell_spectrum(empty, (0.0, 0.0), freqs, d1_bar=1.0)
    assert np.max(np.abs(spec.values - 1.0)) < 1e-8
    tpse = tpse_spectrum(empty, (0.0, 0.0), vertical_emitter(0.5), 0.01,
                         d1_bar=1.0)
    assert np.all(tpse.ratio == 1.0)


def test_single_cylinder_closed_form():
    radius = 0.3
    arr = CylinderArray(np.array([[1.4, 0.2]]), np.array([radius]),
                        np.array([EPSILON]))
    src = LineSource((0.0, 0.0), Polarization.TM)
    d = np.hypot(*arr.positions[0])
    for x in np.linspace(0.2, 3.0, 15):       # size parameter k a up to 3
        k0 = x / radius
        got = purcell_at(arr, src, k0, 12)
        want = single_cylinder_purcell_tm(radius, EPSILON, 1.0, d, k0, lmax=12)
        assert got == pytest.approx(want, rel=1e-6)


def test_reciprocity_and_unitarity():
    arr = CylinderArray(
        np.array([[0.0, 0.0], [1.4, 0.5], [-1.0, 1.2], [0.3, -1.5]]),
        np.full(4, 0.3), np.full(4, EPSILON))
    k0, lmax = 2.1, 6
    tm = assemble_T(arr, k0, Polarization.TM, lmax)
    rng = np.random.default_rng(42)
    pairs = 0
    while pairs < 100:
        p1, p2 = rng.uniform(-3.5, 3.5, (2, 2))
        d1 = np.hypot(*(arr.positions - p1).T)
        d2 = np.hypot(*(arr.positions - p2).T)
        if np.any(d1 < arr.radii + 0.05) or np.any(d2 < arr.radii + 0.05) \
                or np.hypot(*(p1 - p2)) < 0.1:
            continue
        src1 = LineSource(tuple(p1), Polarization.TM)
        src2 = LineSource(tuple(p2), Polarization.TM)
        sol1 = solve(tm, source_coefficients(src1, arr, k0, lmax), source=src1)
        sol2 = solve(tm, source_coefficients(src2, arr, k0, lmax), source=src2)
        g12 = field_at(sol1, p2)
        g21 = field_at(sol2, p1)
        assert abs(g12 - g21) < 1e-8 * max(abs(g12), 1.0)
        pairs += 1
    # lossless Mie unitarity |1 + 2 s_l| = 1
    for x in (0.4, 1.1, 2.7):
        for pol in (Polarization.TM, Polarization.TE_X):
            s = mie_coefficients_orders(8, pol, x, EPSILON, 1.0)
            assert np.max(np.abs(np.abs(1.0 + 2.0 * s) - 1.0)) < 1e-10


def test_decay_dynamics():
    # flat spectrum: Gamma(t) must settle on the Markovian constant within 2%
    level, half = 0.7, 6.0
    omega = np.linspace(-half, half, 24001)
    flat = PurcellSpectrum(omega, np.full_like(omega, level))
    t_plateau = 50.0 / half          # 50 ripple half-periods into the decay
    trace = decay_rate(flat, 0.0, np.linspace(t_plateau, 2 * t_plateau, 40))
    assert np.max(np.abs(trace.gamma_t - level)) < 0.02 * level
    # power-law spectral measure with d_s = 0.5 gives beta = 2 - d_s = 1.5
    ds = 0.5
    om = np.linspace(-0.5, 0.5, 200001)
    with np.errstate(divide="ignore"):
        dens = 1e-4 * np.abs(om) ** (ds - 1.0)
    dens[om == 0] = dens[np.abs(om) > 0].max()
    spec = PurcellSpectrum(om, dens)
    # fit past the band-edge crossover (band half-width 0.5, so t >> 2)
    t = np.r_[0.0, np.geomspace(10.0, 2000.0, 200)]
    fitted = fit_stretched(survival(decay_rate(spec, 0.0, t)))
    assert fitted.beta_fit == pytest.approx(1.5, abs=0.05)


def test_mdfa_oracles(spectra300):
    # white noise: H(q) = 0.5 within 0.07 over q in [-5, 5]
    rng = np.random.default_rng(123)
    noise = mdfa(Signal(rng.standard_normal(2 ** 14)),
                 q_grid=np.linspace(-5, 5, 21))
    assert np.max(np.abs(noise.H - 0.5)) < 0.07
    # binomial cascade p = 0.75: analytic h(q) within 0.05
    p, levels = 0.75, 14
    w = np.array([1.0])
    rng2 = np.random.default_rng(5)
    for _ in range(levels):
        coin = rng2.random(w.size) < 0.5
        left = np.where(coin, p, 1 - p)
        w = np.column_stack((w * left, w * (1 - left))).ravel()
    qs = np.linspace(-4, 4, 17)
    qs = qs[np.abs(qs) > 1e-9]
    res = mdfa(Signal(w), q_grid=qs, window_sizes=2 ** np.arange(4, 13))
    analytic = 1.0 / qs - np.log(p ** qs + (1 - p) ** qs) / (qs * np.log(2.0))
    assert np.max(np.abs(res.H - analytic)) < 0.05
    # q = 2 equals a plain single-pass DFA to machine precision
    sig = Signal(rng.standard_normal(4096))
    prof = profile(sig)
    sizes = np.array([16, 32, 64, 128, 256])
    f2 = np.array([fluctuation(prof, 2.0, int(n)) for n in sizes])
    plain = []
    for n in sizes:
        n = int(n)
        var = []
        for start in list(range(0, prof.size - n + 1, n)):
            seg = prof[start:start + n]
            tgrid = np.arange(n, dtype=float)
            resid = seg - np.polyval(np.polyfit(tgrid, seg, 1), tgrid)
            var.append(np.mean(resid ** 2))
        m = prof.size // n
        tail = [prof[prof.size - (i + 1) * n: prof.size - i * n] for i in range(m)]
        for seg in tail:
            tgrid = np.arange(n, dtype=float)
            resid = seg - np.polyval(np.polyfit(tgrid, seg, 1), tgrid)
            var.append(np.mean(resid ** 2))
        plain.append(np.sqrt(np.mean(var)))
    np.testing.assert_allclose(f2, plain, rtol=1e-12)
    # computed LDOS: the Eisenstein singularity spectrum is wider than the
    # Gaussian one over the shared fundamental-gap window
    widths = {}
    for kind in ("eisenstein", "gaussian"):
        _, _, spec = spectra300[kind]
        # the 201-sample spectrum needs explicit windows to span a decade
        wins = np.unique(np.round(np.geomspace(5, 50, 12)).astype(int))
        out = mdfa(Signal(spec.values), q_grid=np.linspace(-4, 4, 17),
                   window_sizes=wins)
        widths[kind] = out.alpha.max() - out.alpha.min()
    assert widths["eisenstein"] > widths["gaussian"]


def merged_gap(spec, band, spike_width=0.01):
    """Widest run of detected gaps overlapping the band, merging gaps that
    are interrupted only by spikes narrower than spike_width (finite-size
    resonances inside the physical gap)."""
    gaps = [g for g in detect_gaps(spec) if g.hi > band[0] and g.lo < band[1]]
    assert gaps, f"no gap overlaps {band}"
    runs = [[gaps[0]]]
    for g in gaps[1:]:
        if g.lo - runs[-1][-1].hi < spike_width:
            runs[-1].append(g)
        else:
            runs.append([g])
    run = max(runs, key=lambda r: r[-1].hi - r[0].lo)
    return run[0].lo, run[-1].hi, min(g.min_p for g in run)


def test_honeycomb_fundamental_gap(spectra300):
    _, _, spec = spectra300["honeycomb"]
    lo, hi, min_p = merged_gap(spec, FUND_BAND)
    assert min_p < DEFAULT_GAP_THRESHOLD
    assert lo == pytest.approx(FUND_BAND[0], rel=0.05)
    assert hi == pytest.approx(FUND_BAND[1], rel=0.05)


# ------------------------------------------------------------ size scaling

def _midgap_scaling(kind, window, band):
    """Fit the minimum Purcell value inside a fixed gap interval vs size."""
    sizes, minima = [], []
    for count in SIZES[kind]:
        ps = point_set(kind, count)
        arr = build_array(ps, R_OVER_D1, EPSILON)
        spec = cached_purcell_spectrum(arr, (0.0, 0.0), window,
                                       Polarization.TM, 2, d1_bar=ps.d1_bar,
                                       cache_dir=CACHE)
        sel = (spec.omega >= band[0]) & (spec.omega <= band[1])
        sizes.append(array_diameter(ps))
        minima.append(float(spec.values[sel].min()))
    return fit_scaling_models(np.asarray(sizes), np.asarray(minima))


def test_fundamental_gap_scaling():
    fit = _midgap_scaling("honeycomb", FUND_WINDOW, FUND_BANDS["honeycomb"])
    assert fit.model == "exponential", fit
    assert fit.exponent == pytest.approx(2.4, abs=0.4), (
        f"honeycomb decay constant {fit.exponent:.2f} per d1_bar of array "
        f"diameter (published value 2.4 uses an unstated length unit)")
    for kind, beta in (("eisenstein", 15.8), ("gaussian", 14.5)):
        fit = _midgap_scaling(kind, FUND_WINDOW, FUND_BANDS[kind])
        assert fit.model == "power", (
            f"{kind}: r2 exp {fit.r2_exp:.3f} > r2 pow {fit.r2_pow:.3f}, "
            f"exponential decay constant {fit.exponent:.2f}")
        assert fit.exponent == pytest.approx(beta, abs=3.0), fit


def test_highest_gap_scaling():
    # the published honeycomb study claims exponential scaling for both
    # gaps; the quoted decay constant applies to the fundamental one only
    fit = _midgap_scaling("honeycomb", HIGH_WINDOW, HIGH_BANDS["honeycomb"])
    assert fit.model == "exponential", fit
    for kind, beta in (("eisenstein", 9.6), ("gaussian", 10.4)):
        fit = _midgap_scaling(kind, HIGH_WINDOW, HIGH_BANDS[kind])
        assert fit.model == "power", (
            f"{kind}: r2 exp {fit.r2_exp:.3f} > r2 pow {fit.r2_pow:.3f}, "
            f"exponential decay constant {fit.exponent:.2f}")
        assert fit.exponent == pytest.approx(beta, abs=2.0), fit


# ------------------------------------------------------- two-photon emission

TPSE_STEP = 1e-5
TPSE_HALF_POINTS = 75


def _fine_peak_spectrum(ps, arr, coarse):
    """Purcell spectrum on a fine grid around the strongest coarse peak."""
    center = float(coarse.omega[np.argmax(coarse.values)])
    fine = center + TPSE_STEP * np.arange(-TPSE_HALF_POINTS,
                                          TPSE_HALF_POINTS + 1)
    return cached_purcell_spectrum(arr, (0.0, 0.0), fine, Polarization.TM, 2,
                                   d1_bar=ps.d1_bar, cache_dir=CACHE)


def test_two_photon_enhancement(spectra300):
    peaks = {}
    for kind in ("eisenstein", "gaussian"):
        ps, arr, coarse = spectra300[kind]
        spec = _fine_peak_spectrum(ps, arr, coarse)
        peak = float(spec.omega[np.argmax(spec.values)])
        emitter = vertical_emitter(2.0 * peak)
        peaks[kind] = tpse_ratio([None, None, spec], emitter, peak)
        assert peaks[kind] >= 1e2
    # honeycomb reference: both photons inside the fundamental gap
    ps, arr, coarse = spectra300["honeycomb"]
    lo, hi, _ = merged_gap(coarse, FUND_BAND)
    sel = np.abs(coarse.omega - 0.5 * (lo + hi)) < 0.01
    ref = PurcellSpectrum(coarse.omega[sel], coarse.values[sel])
    mid = float(ref.omega[ref.omega.size // 2])    # grid point nearest mid-gap
    honey = tpse_ratio([None, None, ref], vertical_emitter(2.0 * mid), mid)
    assert honey < 1.0
    assert min(peaks.values()) > 1e2 * honey


# ------------------------------------------------------------ resonant modes

# fine search strips just inside the measured gap edges (reduced frequency);
# the ultra-narrow band-edge roots are invisible to coarser sampling
MODE_STRIPS = {"eisenstein": ((0.209, 0.216), (0.247, 0.254)),
               "gaussian": ((0.204, 0.211), (0.259, 0.266))}
MODE_EDGES = {"eisenstein": (0.2017, 0.2514), "gaussian": (0.2073, 0.2619)}
Q_AIR = 78.0


def _coarse_seeds(arr, scale, edge):
    """Strict local minima of log|det T| on a coarse complex-k map."""
    re_grid = np.arange(edge - 0.008, edge + 0.008 + 5e-4, 1e-3)
    a_grid = np.arange(-9.0, -0.9, 0.5)
    vals = np.array([[log_abs_det(arr, complex(r * scale, -10.0 ** a * scale),
                                  Polarization.TM, 2)
                      for r in re_grid] for a in a_grid])
    seeds = []
    for i in range(a_grid.size):
        for j in range(re_grid.size):
            nb = vals[max(0, i - 1):i + 2, max(0, j - 1):j + 2]
            v = vals[i, j]
            if np.isfinite(v) and v == np.nanmin(nb) and np.sum(nb == v) == 1:
                seeds.append((v, complex(re_grid[j] * scale,
                                         -10.0 ** a_grid[i] * scale)))
    seeds.sort(key=lambda s: s[0])
    return [k for _, k in seeds[:3]]


def _strip_seeds(arr, scale, strip):
    """Dips of log|det T| on a fine real-axis strip at Im k = -1e-6 k."""
    res = np.arange(strip[0], strip[1] + 5e-6, 1e-5)
    vals = np.array([log_abs_det(arr, complex(r * scale, -1e-6 * r * scale),
                                 Polarization.TM, 2) for r in res])
    med = np.median(vals)
    dips = [(vals[i], complex(res[i] * scale, -1e-6 * res[i] * scale))
            for i in range(1, res.size - 1)
            if vals[i] < vals[i - 1] and vals[i] < vals[i + 1]
            and vals[i] < med - 1.5]
    dips.sort(key=lambda s: s[0])
    return [k for _, k in dips[:3]]


def _real_axis_dip(arr, scale, red, depth=3.0):
    """True if log|det T| dips near the real axis at reduced frequency red.

    A genuine narrow root leaves a cone log|k - k_root|; probing at
    Im k = -1e-6 k right above the root must sit several units below a
    probe a few linewidths away."""
    def probe(r):
        return log_abs_det(arr, complex(r * scale, -1e-6 * r * scale),
                           Polarization.TM, 2)
    return probe(red) < probe(red + 3e-4) - depth


def _band_edge_modes(kind, ps, arr):
    """Refined distinct band-edge modes with MSE, cached as JSON across runs.

    The four highest-Q modes carry their mode spatial extent; Q is invariant
    under the reduced-frequency rescaling of k."""
    cache = Path(CACHE) / f"modes_{kind}_lmax2.json"
    scale = 2.0 * np.pi / ps.d1_bar
    if cache.exists():
        roots = json.loads(cache.read_text())["roots"]
        return [ModeRecord(k_tilde=complex(re, im) * scale,
                           q_factor=quality_factor(complex(re, im)), mse=mse)
                for re, im, mse in roots]
    seeds = []
    for edge in MODE_EDGES[kind]:
        seeds += _coarse_seeds(arr, scale, edge)
    for strip in MODE_STRIPS[kind]:
        seeds += _strip_seeds(arr, scale, strip)
    modes = []
    for k_seed in seeds:
        try:
            m = refine_mode(arr, k_seed, Polarization.TM, 2)
        except RefinementError:
            continue
        red = m.k_tilde.real / scale
        if not (0.17 < red < 0.29):
            continue                     # drifted out of the gap region
        if m.q_factor > 1e6 and not _real_axis_dip(arr, scale, red):
            continue                     # flat-det runaway, not a root
        if all(abs(red - o.k_tilde.real / scale) > 2e-5 for o in modes):
            modes.append(m)
    top4 = sorted(modes, key=lambda m: -m.q_factor)[:4]
    modes = [replace(m, mse=_mode_mse(ps, arr, m)) if m in top4 else m
             for m in modes]
    cache.parent.mkdir(exist_ok=True)
    cache.write_text(json.dumps({"roots": [
        [m.k_tilde.real / scale, m.k_tilde.imag / scale, m.mse]
        for m in modes]}))
    return modes


def _mode_mse(ps, arr, mode):
    pts = arr.positions
    margin = 0.2 * (pts[:, 0].max() - pts[:, 0].min())
    window = ((pts[:, 0].min() - margin, pts[:, 0].max() + margin),
              (pts[:, 1].min() - margin, pts[:, 1].max() + margin))
    resolution = 0.15 * ps.d1_bar
    _, _, field = mode_field(arr, mode, window, resolution,
                             Polarization.TM, 2)
    if field.ndim == 3:                      # near-degenerate pair
        field = field[0]
    return mode_spatial_extent(field, resolution ** 2)


def test_eisenstein_mode_quality_factors(spectra300):
    ps, arr, _ = spectra300["eisenstein"]
    modes = _band_edge_modes("eisenstein", ps, arr)
    assert len(modes) >= 4, f"only {len(modes)} distinct modes found"
    qs = sorted(m.q_factor for m in modes)
    # leakiest band-edge mode: published Q = 78 (air mode), factor-3 bracket
    assert Q_AIR / 3 < qs[0] < Q_AIR * 3
    # most localized dielectric band-edge mode: published as an ultra-high
    # Q; the determinant and the LDOS-linewidth routes both measure 2.5e7
    assert qs[-1] > 1e8, (
        f"best dielectric mode Q = {qs[-1]:.3e}; det refinement and the "
        f"Purcell-peak linewidth (FWHM ~ 8e-9 reduced) agree on this value, "
        f"and log|det T| is flat below |Im k| ~ 1e-9 reduced, so larger Q "
        f"read from det maps samples numerical noise")


def test_mode_localization_ordering(spectra300):
    # localization is compared through the participation area (inverse of
    # the stored inverse-participation measure): smaller area = more
    # confined; the most confined band-edge mode must be the highest-Q one
    for kind in ("eisenstein", "gaussian"):
        ps, arr, _ = spectra300[kind]
        modes = _band_edge_modes(kind, ps, arr)
        assert len(modes) >= 4
        top4 = sorted(modes, key=lambda m: -m.q_factor)[:4]
        areas = [1.0 / (m.mse if m.mse is not None else _mode_mse(ps, arr, m))
                 for m in top4]
        assert np.argmin(areas) == 0, (
            f"{kind}: highest-Q mode is not the most localized: "
            f"Q={[f'{m.q_factor:.2e}' for m in top4]}, areas={areas}")
