"""Lattices, capacity profiles, stencil generators and seeded randomness.

Everything downstream works on a lattice of unit spacing. A capacity profile
stores one nonnegative mass per (channel, site); 2D grids are stored flattened
in row-major order and reshaped on demand.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

BOUNDARIES = ("periodic", "absorbing")


@dataclass(frozen=True)
class Grid:
    """A 1D or 2D lattice with unit spacing.

    ``shape`` holds the number of sites per axis. Periodic grids wrap with
    index arithmetic modulo the extent; absorbing grids drop anything that
    would move off the lattice.
    """

    shape: tuple[int, ...]
    boundary: str = "periodic"

    def __post_init__(self):
        shape = tuple(int(n) for n in np.atleast_1d(self.shape))
        object.__setattr__(self, "shape", shape)
        if len(shape) not in (1, 2):
            raise ValueError(f"grid dim must be 1 or 2, got {len(shape)}")
        if min(shape) < 3:
            raise ValueError(f"grid extent must be >= 3 per axis, got {shape}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")

    @classmethod
    def line(cls, n: int, boundary: str = "periodic") -> "Grid":
        return cls((n,), boundary)

    @classmethod
    def square(cls, n: int, boundary: str = "periodic") -> "Grid":
        return cls((n, n), boundary)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def center(self) -> tuple[int, ...]:
        return tuple(n // 2 for n in self.shape)

    def flat_index(self, site) -> int:
        site = tuple(int(s) for s in np.atleast_1d(site))
        if len(site) != self.dim:
            raise ValueError(f"site {site} does not match grid dim {self.dim}")
        for s, n in zip(site, self.shape):
            if not 0 <= s < n:
                raise ValueError(f"site {site} out of range for grid shape {self.shape}")
        return int(np.ravel_multi_index(site, self.shape))


@dataclass(frozen=True, eq=False)
class CapacityProfile:
    """Nonnegative capacity mass per channel and lattice site.

    ``values`` has shape ``(channels, grid.size)``. The array is copied and
    made read-only on construction.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1 or values.shape == self.grid.shape:
            values = values.reshape(1, -1)
        if values.ndim != 2:
            values = values.reshape(values.shape[0], -1)
        if values.shape[1] != self.grid.size:
            raise ValueError(
                f"profile has {values.shape[1]} sites, grid {self.grid.shape} has {self.grid.size}"
            )
        if values.shape[0] < 1:
            raise ValueError("profile needs at least one channel")
        if not np.all(np.isfinite(values)):
            raise ValueError("capacity values must be finite")
        if np.any(values < 0):
            raise ValueError(f"capacity values must be nonnegative (min {values.min():.3g})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, grid: Grid, channels: int = 1) -> "CapacityProfile":
        return cls(grid, np.zeros((channels, grid.size)))

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def field(self) -> np.ndarray:
        """Values viewed as ``(channels, *grid.shape)``."""
        return self.values.reshape((self.channels,) + self.grid.shape)

    @property
    def mass(self) -> float:
        return total_mass(self)

    def channel_masses(self) -> np.ndarray:
        return self.values.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, CapacityProfile):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.values, other.values)

    __hash__ = None


def total_mass(profile: CapacityProfile) -> float:
    return float(np.sum(profile.values))


def make_one_hot(grid: Grid, site, channel: int = 0, channels: int = 1) -> CapacityProfile:
    """Unit capacity at a single (channel, site), zero elsewhere."""
    if not 0 <= channel < channels:
        raise ValueError(f"channel {channel} out of range for {channels} channel(s)")
    idx = grid.flat_index(site)
    values = np.zeros((channels, grid.size))
    values[channel, idx] = 1.0
    return CapacityProfile(grid, values)


def gaussian_profile(grid: Grid, sigma: float, center=None, mass: float = 1.0) -> CapacityProfile:
    """Isotropic Gaussian bump sampled at the sites (minimal-image distance on
    periodic grids), normalized to ``mass``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    center = grid.center if center is None else tuple(np.atleast_1d(center))
    r2 = np.zeros(grid.shape)
    for axis, (n, c) in enumerate(zip(grid.shape, center)):
        d = np.arange(n) - c
        if grid.periodic:
            d = (d + n // 2) % n - n // 2
        shape = [1] * grid.dim
        shape[axis] = n
        r2 = r2 + (d.astype(float) ** 2).reshape(shape)
    g = np.exp(-0.5 * r2 / sigma**2)
    return CapacityProfile(grid, mass * g.ravel() / g.sum())


def shifted(field: np.ndarray, offset: Sequence[int], periodic: bool) -> np.ndarray:
    """Return ``g`` with ``g[..., x] = field[..., x + offset]``.

    ``field`` has a leading channel axis followed by the spatial axes. Off-grid
    reads give zero when not periodic.
    """
    offset = tuple(int(v) for v in offset)
    spatial = tuple(range(1, field.ndim))
    if periodic:
        return np.roll(field, tuple(-v for v in offset), axis=spatial)
    out = np.zeros_like(field)
    src = [slice(None)]
    dst = [slice(None)]
    for v, n in zip(offset, field.shape[1:]):
        if abs(v) >= n:
            return out
        if v >= 0:
            src.append(slice(v, n))
            dst.append(slice(0, n - v))
        else:
            src.append(slice(0, n + v))
            dst.append(slice(-v, n))
    out[tuple(dst)] = field[tuple(src)]
    return out


@dataclass(frozen=True, eq=False)
class StencilGenerator:
    """Redistribution rates over nonzero lattice offsets.

    Capacity at site ``y`` moves to ``y - v`` at rate ``rates[v]``; the implied
    diagonal is minus the total rate. Rates are normalized to sum to one, so a
    single epsilon carries the overall scale.
    """

    offsets: tuple[tuple[int, ...], ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        offsets = tuple(tuple(int(c) for c in np.atleast_1d(v)) for v in self.offsets)
        rates = np.asarray(self.rates, dtype=np.float64).ravel()
        if not offsets:
            raise ValueError("stencil generator needs at least one offset")
        if len(offsets) != len(rates):
            raise ValueError(f"{len(offsets)} offsets but {len(rates)} rates")
        if len({len(v) for v in offsets}) != 1:
            raise ValueError("all offsets must have the same dimension")
        if any(not any(v) for v in offsets):
            raise ValueError("offset 0 is implied by the diagonal and cannot be listed")
        if len(set(offsets)) != len(offsets):
            raise ValueError("duplicate offsets")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and nonnegative")
        total = rates.sum()
        if total <= 0:
            raise ValueError("rates must not all be zero")
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "rates", tuple(float(r) for r in rates / total))

    @classmethod
    def from_mapping(cls, rates: dict) -> "StencilGenerator":
        """Build from ``{offset: rate}``; integer keys are 1D offsets."""
        offsets = [k if isinstance(k, tuple) else (k,) for k in rates]
        return cls(tuple(offsets), tuple(rates.values()))

    @classmethod
    def symmetric(cls, radius: int = 1, dim: int = 1) -> "StencilGenerator":
        """Equal rates on the axis offsets ``±k e_i`` for ``k = 1..radius``."""
        if radius < 1:
            raise ValueError("radius must be >= 1")
        offsets = []
        for axis in range(dim):
            for k in range(1, radius + 1):
                for sign in (1, -1):
                    v = [0] * dim
                    v[axis] = sign * k
                    offsets.append(tuple(v))
        return cls(tuple(offsets), (1.0,) * len(offsets))

    @property
    def dim(self) -> int:
        return len(self.offsets[0])

    @property
    def radius(self) -> int:
        return max(max(abs(c) for c in v) for v in self.offsets)

    def dilated(self, d: int) -> "StencilGenerator":
        if d == 1:
            return self
        return StencilGenerator(tuple(tuple(d * c for c in v) for v in self.offsets), self.rates)

    def apply(self, field: np.ndarray, periodic: bool) -> np.ndarray:
        """Sum over offsets of ``rate * field(x + v)``; no diagonal term."""
        out = None
        for v, r in zip(self.offsets, self.rates):
            term = r * shifted(field, v, periodic)
            out = term if out is None else out + term
        return out

    def to_dict(self) -> dict:
        return {"offsets": [list(v) for v in self.offsets], "rates": list(self.rates)}

    def __eq__(self, other):
        if not isinstance(other, StencilGenerator):
            return NotImplemented
        return self.offsets == other.offsets and self.rates == other.rates

    def __hash__(self):
        return hash((self.offsets, self.rates))


def second_moment(gen: StencilGenerator) -> np.ndarray:
    """Matrix ``M_ij = sum_v v_i v_j rate_v`` (1x1 in 1D)."""
    v = np.asarray(gen.offsets, dtype=np.float64)
    w = np.asarray(gen.rates)
    return np.einsum("k,ki,kj->ij", w, v, v)


@dataclass(frozen=True)
class RngSpec:
    """A seed plus a named bit generator.

    PCG64 is the only algorithm offered; numpy guarantees its stream for a
    given seed, so runs keyed by an ``RngSpec`` are reproducible.
    """

    seed: int = 0
    algorithm: str = "PCG64"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.algorithm != "PCG64":
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}")
        object.__setattr__(self, "seed", int(self.seed))

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *key: int) -> "RngSpec":
        """Independent stream derived from this seed and an integer key."""
        ss = np.random.SeedSequence([self.seed, *(int(k) for k in key)])
        return RngSpec(int(ss.generate_state(1, dtype=np.uint64)[0]), self.algorithm)


def random_generator(rng: RngSpec, radius: int, dim: int = 1) -> StencilGenerator:
    """Generator on every nonzero offset in ``[-radius, radius]^dim`` with
    i.i.d. uniform (0, 1] rates, normalized."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if dim not in (1, 2):
        raise ValueError("dim must be 1 or 2")
    offsets = [v for v in itertools.product(range(-radius, radius + 1), repeat=dim) if any(v)]
    rates = 1.0 - rng.generator().random(len(offsets))
    return StencilGenerator(tuple(offsets), tuple(rates))
