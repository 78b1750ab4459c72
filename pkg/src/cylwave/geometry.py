"""Point-set generation and cylinder-array construction.

Three families of scatterer positions are supported: the two-site honeycomb
lattice, the Eisenstein primes (prime elements of Z[w], w = exp(2*pi*i/3))
and the Gaussian primes (prime elements of Z[i]).  All downstream physics is
expressed in terms of the mean nearest-neighbour spacing d1_bar of the point
set, which this module also computes.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from sympy import isprime

from cylwave.errors import DomainError, GeometryError

__all__ = [
    "PointSet",
    "CylinderArray",
    "gaussian_primes",
    "eisenstein_primes",
    "honeycomb",
    "crop_to_count",
    "mean_nn_distance",
    "build_array",
]


@dataclass(frozen=True)
class PointSet:
    """A planar point set with its generation metadata.

    points has shape (N, 2).  kind is one of 'honeycomb', 'eisenstein',
    'gaussian'.  norm_bound applies to the prime sets, shells to the lattice.
    d1_bar is the mean nearest-neighbour distance in the same units as the
    coordinates.
    """

    points: np.ndarray
    kind: str
    d1_bar: float
    norm_bound: int | None = None
    bond_length: float | None = None

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DomainError("points must have shape (N, 2)")
        if not np.all(np.isfinite(pts)):
            raise DomainError("points must be finite")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class CylinderArray:
    """Positions (um), radii (um), permittivities and host index of N cylinders."""

    positions: np.ndarray
    radii: np.ndarray
    permittivities: np.ndarray
    host_index: float = 1.0

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=float))
        rad = np.ascontiguousarray(np.asarray(self.radii, dtype=float))
        eps = np.ascontiguousarray(np.asarray(self.permittivities, dtype=float))
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise GeometryError("positions must have shape (N, 2)")
        n = pos.shape[0]
        if rad.shape != (n,) or eps.shape != (n,):
            raise GeometryError("radii and permittivities must match positions")
        if n and np.any(rad <= 0):
            raise GeometryError("all radii must be positive")
        if n and np.any(eps < 1):
            raise GeometryError("all permittivities must be >= 1")
        if self.host_index < 1:
            raise GeometryError("host index must be >= 1")
        if n > 1:
            tree = cKDTree(pos)
            dist, idx = tree.query(pos, k=2)
            sep = dist[:, 1]
            rsum = rad + rad[idx[:, 1]]
            if np.any(sep <= rsum):
                bad = int(np.argmin(sep - rsum))
                raise GeometryError(
                    f"cylinders overlap: centers {bad} and {int(idx[bad, 1])} "
                    f"separated by {sep[bad]:.6g} with radius sum {rsum[bad]:.6g}"
                )
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "radii", rad)
        object.__setattr__(self, "permittivities", eps)

    def __len__(self):
        return self.positions.shape[0]

    @property
    def n_cylinders(self):
        return self.positions.shape[0]


def _nn_distances(points: np.ndarray) -> np.ndarray:
    tree = cKDTree(points)
    dist, _ = tree.query(points, k=2)
    return dist[:, 1]


def mean_nn_distance(points) -> float:
    """Average over all points of the distance to the nearest other point."""
    pts = points.points if isinstance(points, PointSet) else np.asarray(points, float)
    if pts.shape[0] < 2:
        raise DomainError("need at least 2 points for a nearest-neighbour distance")
    return float(np.mean(_nn_distances(pts)))


def _is_gaussian_prime(a: int, b: int) -> bool:
    if a == 0 and b == 0:
        return False
    if a == 0:
        return isprime(abs(b)) and abs(b) % 4 == 3
    if b == 0:
        return isprime(abs(a)) and abs(a) % 4 == 3
    return isprime(a * a + b * b)


def gaussian_primes(norm_bound: int) -> PointSet:
    """All Gaussian primes a + b*i with a^2 + b^2 <= norm_bound, as points (a, b)."""
    if norm_bound < 2:
        raise DomainError("norm_bound must be >= 2")
    pts = []
    amax = int(np.floor(np.sqrt(norm_bound)))
    for a in range(-amax, amax + 1):
        bmax = int(np.floor(np.sqrt(norm_bound - a * a)))
        for b in range(-bmax, bmax + 1):
            if _is_gaussian_prime(a, b):
                pts.append((a, b))
    pts = np.array(pts, dtype=float)
    return PointSet(pts, kind="gaussian", d1_bar=mean_nn_distance(pts), norm_bound=norm_bound)


def _is_eisenstein_prime(a: int, b: int) -> bool:
    n = a * a - a * b + b * b
    if n == 0:
        return False
    if isprime(n):
        return True
    # inert rational primes q = 2 (mod 3): only their associates have norm q^2
    q = int(round(np.sqrt(n)))
    return q * q == n and isprime(q) and q % 3 == 2


def eisenstein_primes(norm_bound: int) -> PointSet:
    """All Eisenstein primes a + b*w with norm <= norm_bound, embedded in the plane.

    The planar embedding is x = a - b/2, y = b*sqrt(3)/2 (triangular basis).
    """
    if norm_bound < 2:
        raise DomainError("norm_bound must be >= 2")
    pts = []
    m = int(np.ceil(2 * np.sqrt(norm_bound)))  # |a|, |b| <= 2*sqrt(N/3) < m
    for a in range(-m, m + 1):
        for b in range(-m, m + 1):
            if a * a - a * b + b * b <= norm_bound and _is_eisenstein_prime(a, b):
                pts.append((a - b / 2.0, b * np.sqrt(3) / 2.0))
    pts = np.array(pts, dtype=float)
    return PointSet(pts, kind="eisenstein", d1_bar=mean_nn_distance(pts), norm_bound=norm_bound)


def _crop_order(points: np.ndarray) -> np.ndarray:
    """Deterministic nearest-to-origin ordering: radius, then polar angle in [0, 2pi)."""
    r = np.hypot(points[:, 0], points[:, 1])
    theta = np.mod(np.arctan2(points[:, 1], points[:, 0]), 2 * np.pi)
    return np.lexsort((theta, np.round(r, 12)))


def honeycomb(count: int, bond_length: float = 1.0) -> PointSet:
    """Two-site honeycomb lattice centred on a hexagon hole, cropped to `count` sites.

    The nearest-neighbour bond length equals bond_length and no site sits at
    the origin; the origin is a hexagon center so a probe there is always in
    the host medium.
    """
    if count < 2:
        raise DomainError("count must be >= 2")
    b = float(bond_length)
    a = b * np.sqrt(3)  # triangular lattice constant
    a1 = np.array([a, 0.0])
    a2 = np.array([a / 2.0, a * np.sqrt(3) / 2.0])
    u = (a1 + a2) / 3.0  # basis offset, |u| = bond length
    # generous window: enough shells that `count` nearest sites are inside
    shells = int(np.ceil(np.sqrt(count))) + 3
    sites = []
    for m in range(-shells, shells + 1):
        for n in range(-shells, shells + 1):
            base = m * a1 + n * a2
            sites.append(base + u)
            sites.append(base + 2 * u)
    sites = np.array(sites)
    order = _crop_order(sites)
    if count > len(sites):
        raise DomainError("requested count exceeds generated window")
    pts = sites[order[:count]]
    return PointSet(pts, kind="honeycomb", d1_bar=mean_nn_distance(pts), bond_length=b)


def crop_to_count(ps: PointSet, count: int) -> PointSet:
    """Keep the `count` points nearest the origin (radius tie-broken by angle)."""
    if count < 2:
        raise DomainError("count must be >= 2")
    if len(ps) < count:
        raise DomainError(f"point set has only {len(ps)} points, need {count}")
    order = _crop_order(ps.points)
    pts = ps.points[order[:count]]
    return replace(ps, points=pts, d1_bar=mean_nn_distance(pts))


def build_array(
    ps: PointSet,
    r_over_d1: float,
    epsilon: float,
    host_index: float = 1.0,
    d1_um: float | None = None,
) -> CylinderArray:
    """Turn a point set into a uniform cylinder array.

    Every cylinder gets radius r_over_d1 * d1_bar and permittivity epsilon.
    If d1_um is given the positions are rescaled so that the mean
    nearest-neighbour distance equals d1_um micrometres; otherwise the point
    set's native units are kept.
    """
    if not 0 < r_over_d1 < 0.5:
        raise DomainError("r_over_d1 must lie in (0, 0.5)")
    if epsilon < 1:
        raise DomainError("epsilon must be >= 1")
    scale = 1.0 if d1_um is None else d1_um / ps.d1_bar
    pos = ps.points * scale
    d1 = ps.d1_bar * scale
    n = len(ps)
    radius = r_over_d1 * d1
    return CylinderArray(
        positions=pos,
        radii=np.full(n, radius),
        permittivities=np.full(n, float(epsilon)),
        host_index=float(host_index),
    )
