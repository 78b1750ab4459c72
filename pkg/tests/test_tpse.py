import numpy as np
import pytest

from cylwave.errors import DomainError
from cylwave.geometry import CylinderArray, build_array, honeycomb
from cylwave.scattering import LineSource, Polarization, purcell_at
from cylwave.spectra import PurcellSpectrum
from cylwave.tpse import (
    EmitterModel,
    TpseSpectrum,
    purcell_spatial_map,
    symmetric_grid,
    tpse_ratio,
    tpse_spectrum,
    tpse_total,
    vertical_emitter,
)

EMPTY = CylinderArray(np.zeros((0, 2)), np.zeros(0), np.zeros(0))
OMEGA_IF = 0.5


def ones_triple(grid):
    p = PurcellSpectrum(grid, np.ones(grid.size))
    return (p, p, p)


def isotropic_emitter(omega_if):
    t = np.eye(3) / 3.0
    return EmitterModel(omega_if=omega_if, t_tensor=lambda _o: t)


# ------------------------------------------------------------ plumbing

def test_symmetric_grid_closed_under_partner_map():
    grid = symmetric_grid(OMEGA_IF, 1e-3)
    assert np.allclose(grid + grid[::-1], OMEGA_IF)
    assert grid[0] > 0 and grid[-1] < OMEGA_IF


def test_emitter_tensor_validation():
    bad_sum = EmitterModel(OMEGA_IF, lambda _o: np.diag([0.5, 0.0, 0.0]))
    with pytest.raises(DomainError):
        bad_sum.tensor_at(0.1)
    negative = EmitterModel(OMEGA_IF, lambda _o: np.diag([-0.5, 0.5, 1.0]))
    with pytest.raises(DomainError):
        negative.tensor_at(0.1)


def test_spectrum_type_rejects_out_of_band_grid():
    with pytest.raises(DomainError):
        TpseSpectrum(np.array([0.0, 0.5]), np.array([1.0, 1.0]), vertical_emitter(OMEGA_IF))


# --------------------------------------------------------------- ratio

def test_free_space_ratio_is_one_for_any_normalized_tensor():
    grid = symmetric_grid(OMEGA_IF, OMEGA_IF / 64)
    triple = ones_triple(grid)
    rng = np.random.default_rng(2)
    raw = rng.random((3, 3))
    t = raw / raw.sum()
    emitter = EmitterModel(OMEGA_IF, lambda _o: t)
    for om in grid[:: max(1, grid.size // 7)]:
        assert tpse_ratio(triple, emitter, float(om)) == pytest.approx(1.0, abs=1e-14)


def test_vertical_emitter_reduces_to_pz_product():
    grid = symmetric_grid(OMEGA_IF, OMEGA_IF / 64)
    rng = np.random.default_rng(8)
    pz = PurcellSpectrum(grid, 1.0 + rng.random(grid.size))
    triple = (None, None, pz)
    emitter = vertical_emitter(OMEGA_IF)
    for i in (3, 10, 25):
        om = float(grid[i])
        expected = pz.value_at(om) * pz.value_at(OMEGA_IF - om)
        assert tpse_ratio(triple, emitter, om) == pytest.approx(expected, rel=1e-14)
    mid = OMEGA_IF / 2
    assert tpse_ratio(triple, emitter, mid) == pytest.approx(pz.value_at(mid) ** 2)


def test_ratio_refuses_off_grid_frequency():
    grid = symmetric_grid(OMEGA_IF, OMEGA_IF / 64)
    triple = ones_triple(grid)
    with pytest.raises(DomainError):
        tpse_ratio(triple, isotropic_emitter(OMEGA_IF), float(grid[3]) + 1e-6)


def test_ratio_monotone_in_orientation_scaling():
    grid = symmetric_grid(OMEGA_IF, OMEGA_IF / 32)
    rng = np.random.default_rng(13)
    base = [PurcellSpectrum(grid, 0.5 + rng.random(grid.size)) for _ in range(3)]
    emitter = isotropic_emitter(OMEGA_IF)
    scaled = (
        PurcellSpectrum(grid, 3.0 * base[0].values),
        base[1],
        base[2],
    )
    for om in grid[1:-1:5]:
        assert tpse_ratio(scaled, emitter, float(om)) >= tpse_ratio(
            tuple(base), emitter, float(om)
        )


# ------------------------------------------------------------ spectrum

def test_tpse_spectrum_symmetric_for_symmetric_emitter():
    arr = build_array(honeycomb(24), 0.35, 10.5, d1_um=0.22)
    emitter = vertical_emitter(0.26)
    spec = tpse_spectrum(arr, (0.0, 0.0), emitter, 0.26 / 24)
    assert np.allclose(spec.ratio, spec.ratio[::-1], rtol=1e-12)
    assert np.allclose(spec.omega_over_if + spec.omega_over_if[::-1], 1.0)


def test_tpse_spectrum_free_space_identity():
    emitter = vertical_emitter(OMEGA_IF)
    spec = tpse_spectrum(EMPTY, (0.0, 0.0), emitter, OMEGA_IF / 32, d1_bar=1.0)
    assert np.allclose(spec.ratio, 1.0, atol=1e-12)


# --------------------------------------------------------------- total

def test_total_of_unit_spectrum_is_one():
    x = symmetric_grid(1.0, 1.0 / 128)
    spec = TpseSpectrum(x, np.ones(x.size), vertical_emitter(1.0))
    shape = lambda u: u ** 3 * (1 - u) ** 2
    assert tpse_total(spec, shape) == pytest.approx(1.0, rel=1e-12)
    assert tpse_total(spec, lambda u: 1.0) == pytest.approx(1.0, rel=1e-12)


def test_total_linear_in_ratio():
    x = symmetric_grid(1.0, 1.0 / 128)
    spec = TpseSpectrum(x, np.full(x.size, 2.0), vertical_emitter(1.0))
    assert tpse_total(spec, lambda u: u * (1 - u)) == pytest.approx(2.0, rel=1e-12)


def test_total_narrow_peak_oracle():
    x = symmetric_grid(1.0, 1.0 / 4096)
    h, w = 100.0, 0.01
    ratio = np.ones(x.size)
    ratio[np.abs(x - 0.5) < w / 2] = h
    spec = TpseSpectrum(x, ratio, vertical_emitter(1.0))
    shape = lambda u: u ** 3 * (1 - u) ** 2
    shapes = np.array([shape(u) for u in x])
    expected = 1.0 + (h - 1.0) * w * shape(0.5) / np.trapezoid(shapes, x)
    assert tpse_total(spec, shape) == pytest.approx(expected, rel=1e-2)


def test_total_rejects_degenerate_shape():
    x = symmetric_grid(1.0, 1.0 / 64)
    spec = TpseSpectrum(x, np.ones(x.size), vertical_emitter(1.0))
    with pytest.raises(DomainError):
        tpse_total(spec, lambda u: 0.0)


# ----------------------------------------------------------- spatial map

def test_spatial_map_empty_array_is_unity():
    xs, ys, grid = purcell_spatial_map(EMPTY, 2.0, window=((0, 1), (0, 1)), resolution=0.5)
    assert np.allclose(grid, 1.0)


def test_spatial_map_matches_pointwise_purcell():
    arr = build_array(honeycomb(12), 0.35, 10.5, d1_um=0.22)
    k0 = 5.5
    xs, ys, grid = purcell_spatial_map(
        arr, k0, window=((-0.15, 0.15), (-0.15, 0.15)), resolution=0.15
    )
    for iy, y in enumerate(ys):
        for ix, x in enumerate(xs):
            if np.isnan(grid[iy, ix]):
                continue
            direct = purcell_at(arr, LineSource((x, y), Polarization.TM), k0, 2)
            assert grid[iy, ix] == pytest.approx(direct, rel=1e-10)


def test_spatial_map_masks_interior_points():
    arr = build_array(honeycomb(6), 0.35, 10.5, d1_um=0.22)
    c = arr.positions[0]
    xs, ys, grid = purcell_spatial_map(
        arr, 5.0, window=((c[0] - 0.01, c[0] + 0.01), (c[1] - 0.01, c[1] + 0.01)),
        resolution=0.01,
    )
    assert np.all(np.isnan(grid))


def test_spatial_map_far_field_approaches_unity():
    arr = build_array(honeycomb(6), 0.35, 10.5, d1_um=0.22)
    extent = np.max(np.hypot(*arr.positions.T)) + arr.radii.max()

    def deviation(dist):
        xs, ys, grid = purcell_spatial_map(
            arr, 5.0, window=((dist, dist + 0.1), (0.0, 0.1)), resolution=0.1
        )
        return np.abs(grid - 1.0).max()

    near, far = deviation(10.0 * extent), deviation(40.0 * extent)
    assert far < 1e-2
    assert far < near  # scattered contribution keeps decaying with distance
