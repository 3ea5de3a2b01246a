"""Scalar diagnostics: mass, centroid and width of profiles, Lp distances,
and log-log power-law fits."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CapacityProfile


class UndefinedStatsError(ValueError):
    """Profile has no mass, so moments are undefined."""


class AmbiguousCentroidError(ValueError):
    """Support on a periodic grid spans more than half the domain."""


@dataclass(frozen=True)
class ProfileStats:
    """Moments of a profile (channels summed), in lattice units.

    ``centroid`` and ``variance`` are per axis; ``std_width`` is the root of
    the total variance.
    """

    mass: float
    centroid: np.ndarray
    variance: np.ndarray
    _dist: np.ndarray = field(repr=False, compare=False)
    _cum: np.ndarray = field(repr=False, compare=False)

    @property
    def std_width(self) -> float:
        return float(np.sqrt(np.sum(self.variance)))

    @property
    def total_variance(self) -> float:
        return float(np.sum(self.variance))

    def quantile_width(self, q: float) -> float:
        """Width ``2r`` of the smallest interval (disc in 2D) centered on the
        centroid holding at least a fraction ``q`` of the mass."""
        if not 0 < q <= 1:
            raise ValueError("q must lie in (0, 1]")
        target = q * self.mass * (1 - 1e-12)
        i = int(np.searchsorted(self._cum, target, side="left"))
        return 2.0 * float(self._dist[min(i, len(self._dist) - 1)])


def _unwrapped_coords(marginal: np.ndarray, periodic: bool, tol: float) -> np.ndarray:
    n = marginal.size
    x = np.arange(n, dtype=np.float64)
    if not periodic:
        return x
    support = np.flatnonzero(marginal > tol)
    if support.size == 0:
        return x
    # cut the circle in the middle of the largest empty gap
    gaps = np.diff(np.concatenate([support, [support[0] + n]]))
    g = int(np.argmax(gaps))
    start = support[(g + 1) % support.size]
    extent = n - gaps[g] + 1
    if extent > n / 2:
        raise AmbiguousCentroidError(
            f"support spans {extent} of {n} sites; centroid is ambiguous on a periodic grid"
        )
    return start + ((x - start) % n)


def profile_stats(p: CapacityProfile, tol: float = 0.0) -> ProfileStats:
    """Mass, centroid, variance and quantile widths of a profile.

    On periodic grids moments are taken over the minimal wrapped window, so
    the occupied sites must fit in half the domain. Sites at or below
    ``tol * mass`` do not count as occupied when locating that window (their
    mass still enters the moments).
    """
    mass = float(np.sum(p.values))
    if not mass > 0:
        raise UndefinedStatsError("profile has zero mass")
    dens = p.field.sum(axis=0)
    grid = p.grid
    coords = []
    centroid = np.empty(grid.dim)
    variance = np.empty(grid.dim)
    for axis in range(grid.dim):
        other = tuple(a for a in range(grid.dim) if a != axis)
        marginal = dens.sum(axis=other) if other else dens
        xs = _unwrapped_coords(marginal, grid.periodic, tol * mass)
        mu = float(np.sum(marginal * xs) / mass)
        variance[axis] = float(np.sum(marginal * (xs - mu) ** 2) / mass)
        coords.append(xs - mu)
        centroid[axis] = mu % grid.shape[axis] if grid.periodic else mu
    mesh = np.meshgrid(*coords, indexing="ij")
    dist = np.sqrt(sum(m**2 for m in mesh)).ravel()
    order = np.argsort(dist, kind="stable")
    cum = np.cumsum(dens.ravel()[order])
    return ProfileStats(mass, centroid, variance, dist[order], cum)


def lp_error(a: CapacityProfile, b: CapacityProfile, p=1) -> float:
    """Discrete Lp distance over all channels and sites, p in {1, 2, inf}."""
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise ValueError(f"profile shapes differ: {a.values.shape} on {a.grid.shape} vs "
                         f"{b.values.shape} on {b.grid.shape}")
    d = np.abs(a.values - b.values).ravel()
    if p in (np.inf, "inf"):
        return float(d.max())
    if p == 1:
        return float(d.sum())
    if p == 2:
        return float(np.sqrt(np.sum(d * d)))
    raise ValueError(f"p must be 1, 2 or inf, got {p!r}")


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    prefactor: float
    r2: float

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "prefactor": self.prefactor, "r2": self.r2}


def fit_power_law(points) -> PowerLawFit:
    """Least-squares line through ``(log x, log y)``; ``y ~ prefactor * x**exponent``."""
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("need at least two (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("power-law fit needs positive x and y")
    if np.unique(x).size < 2:
        raise ValueError("need at least two distinct x values")
    lx, ly = np.log(x), np.log(y)
    A = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(np.sum(resid**2))
    # y constant up to rounding: the horizontal line is an exact fit
    noise = len(ly) * (64 * np.finfo(np.float64).eps * max(1.0, float(np.abs(ly).max()))) ** 2
    r2 = 1.0 if ss_tot <= noise else 1.0 - ss_res / ss_tot
    return PowerLawFit(float(slope), float(np.exp(intercept)), r2)
