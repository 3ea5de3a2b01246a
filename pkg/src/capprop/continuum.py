"""Continuum counterparts of the discrete propagation.

Closed-form heat-kernel and Duhamel solutions, the integrated diffusivity of
exponentially dilated stacks, the analytic leak split, and an explicit
finite-difference solver on the same unit lattice as the discrete module.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special

from .core import CapacityProfile, Grid, shifted
from .discrete import LeakSchedule, Trajectory

KERNELS = ("gaussian", "lattice")

# kernel weights below this fraction of the peak are dropped before the
# circular convolution
_KERNEL_CUTOFF = 1e-18


@dataclass(frozen=True)
class DiffusionModel:
    """``d pi/dt = sum_ij D_ij d_i d_j pi - alpha(t) pi + s(t, x)`` on a lattice.

    ``diffusivity`` is a scalar, a callable ``D(t)`` (1D or isotropic 2D), or a
    constant symmetric 2x2 tensor. ``absorption`` is a scalar, callable or
    :class:`LeakSchedule`. ``source(t)`` returns a site array or is None.
    """

    initial: CapacityProfile
    diffusivity: float | Callable[[float], float] | np.ndarray = 0.5
    absorption: float | Callable[[float], float] = 0.0
    source: Callable[[float], np.ndarray] | None = None

    def __post_init__(self):
        D = self.diffusivity
        if not callable(D):
            D = np.asarray(D, dtype=np.float64)
            if D.ndim == 2:
                if D.shape != (self.grid.dim, self.grid.dim):
                    raise ValueError(f"diffusion tensor must be {self.grid.dim}x{self.grid.dim}")
                if not np.allclose(D, D.T, rtol=0, atol=0):
                    raise ValueError("diffusion tensor must be symmetric")
                if np.any(np.linalg.eigvalsh(D) < 0):
                    raise ValueError("diffusion tensor must be positive semidefinite")
            elif D.ndim == 0:
                if D < 0:
                    raise ValueError("diffusivity must be >= 0")
                D = float(D)
            else:
                raise ValueError("diffusivity must be a scalar, callable or square tensor")
            object.__setattr__(self, "diffusivity", D)
        if not callable(self.absorption) and self.absorption < 0:
            raise ValueError("absorption must be >= 0")

    @property
    def grid(self) -> Grid:
        return self.initial.grid

    def D(self, t: float) -> np.ndarray:
        """Diffusion tensor at time ``t`` as a ``dim x dim`` array."""
        D = self.diffusivity
        if callable(D):
            d = float(D(t))
            if d < 0:
                raise ValueError(f"diffusivity negative at t={t}")
            return d * np.eye(self.grid.dim)
        if np.ndim(D) == 0:
            return D * np.eye(self.grid.dim)
        return D

    def alpha(self, t: float) -> float:
        a = self.absorption
        return float(a(t)) if callable(a) else float(a)

    def V(self, t: float) -> np.ndarray:
        """Integrated diffusion tensor ``int_0^t D(s) ds``."""
        D = self.diffusivity
        if callable(D):
            val, _ = integrate.quad(lambda s: float(D(s)), 0.0, t, limit=200)
            return val * np.eye(self.grid.dim)
        return self.D(0.0) * t

    @property
    def has_absorption(self) -> bool:
        a = self.absorption
        if isinstance(a, LeakSchedule):
            return a.max > 0
        return callable(a) or a > 0


def _images(n: int, var: float) -> int:
    # periodic images needed to cover ~40 standard deviations
    return int(np.ceil(40.0 * np.sqrt(var) / n)) + 1


def _gaussian_kernel(grid: Grid, V: np.ndarray) -> np.ndarray:
    """Periodic image sum of the Gaussian with covariance ``2V`` at sites."""
    cov = 2.0 * np.asarray(V, dtype=np.float64)
    if not np.any(cov):
        k = np.zeros(grid.shape)
        k[(0,) * grid.dim] = 1.0
        return k
    if np.linalg.det(cov) <= 0:
        raise ValueError("degenerate diffusion tensor: Gaussian kernel needs positive definite covariance")
    coords = []
    for i, n in enumerate(grid.shape):
        m = _images(n, cov[i, i])
        coords.append((np.arange(n)[None, :] + n * np.arange(-m, m + 1)[:, None]).astype(float))
    if grid.dim == 1:
        return np.exp(-0.5 * coords[0] ** 2 / cov[0, 0]).sum(axis=0)
    P = np.linalg.inv(cov)
    X = coords[0][:, :, None, None]
    Y = coords[1][None, None, :, :]
    q = P[0, 0] * X**2 + 2 * P[0, 1] * X * Y + P[1, 1] * Y**2
    return np.exp(-0.5 * q).sum(axis=(0, 2))


def _lattice_kernel_1d(n: int, V: float) -> np.ndarray:
    # e^{-2V} I_j(2V): exact kernel of d/dt = D * (second difference)
    m = int(np.ceil((40.0 * np.sqrt(2 * V + 1e-300) + 20) / n)) + 1
    j = np.arange(n)[None, :] + n * np.arange(-m, m + 1)[:, None]
    return special.ive(np.abs(j), 2.0 * V).sum(axis=0)


def _lattice_kernel(grid: Grid, V: np.ndarray) -> np.ndarray:
    V = np.asarray(V, dtype=np.float64)
    if grid.dim == 2 and V[0, 1] != 0:
        raise ValueError("lattice kernel supports diagonal diffusion tensors only")
    parts = [_lattice_kernel_1d(n, V[i, i]) for i, n in enumerate(grid.shape)]
    return parts[0] if grid.dim == 1 else np.outer(parts[0], parts[1])


def heat_kernel(grid: Grid, V, kernel: str = "gaussian") -> np.ndarray:
    """Unit-mass periodic heat kernel for integrated diffusivity ``V``,
    indexed by offset from the origin site."""
    if not grid.periodic:
        raise ValueError("heat kernel solutions need a periodic grid")
    V = np.atleast_2d(np.asarray(V, dtype=np.float64))
    if V.shape != (grid.dim, grid.dim):
        V = float(V.ravel()[0]) * np.eye(grid.dim)
    if kernel == "gaussian":
        k = _gaussian_kernel(grid, V)
    elif kernel == "lattice":
        k = _lattice_kernel(grid, V)
    else:
        raise ValueError(f"kernel must be one of {KERNELS}")
    return k / k.sum()


def convolve_periodic(values: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Circular convolution ``out[x] = sum_j kernel[j] * values[x - j]``.

    ``values`` is ``(channels, *shape)``; done as a sum of shifted copies so
    the result is nonnegative whenever both inputs are.
    """
    out = np.zeros_like(values)
    cutoff = kernel.max() * _KERNEL_CUTOFF
    axes = tuple(range(1, values.ndim))
    for idx in zip(*np.nonzero(kernel > cutoff)):
        out += kernel[idx] * np.roll(values, idx, axis=axes)
    return out


def heat_kernel_solution(model: DiffusionModel, t: float, kernel: str = "gaussian") -> CapacityProfile:
    """Solution at time ``t`` without absorption or source.

    ``kernel="gaussian"`` samples the free-space Gaussian of covariance
    ``2 V(t)`` at the sites (periodic images summed) and renormalizes it.
    ``kernel="lattice"`` is the exact solution of the same equation with the
    second derivative replaced by the lattice second difference; the two agree
    only once the kernel is many sites wide.
    """
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if model.has_absorption or model.source is not None:
        raise ValueError("heat_kernel_solution needs zero absorption and no source")
    init = model.initial
    if t == 0:
        return init
    k = heat_kernel(model.grid, model.V(t), kernel)
    out = convolve_periodic(init.field, k)
    return CapacityProfile(init.grid, out.reshape(init.channels, -1))


def v_integral(ratio: float | None = None, depth: int | None = None, exponent: float | None = None,
               exact: bool = False) -> float:
    """Integrated diffusivity ``V(1)`` for ``D(t) = exp(a (1 - t))``.

    Given ``exponent=a`` returns ``(e^a - 1) / a`` (1 in the limit a -> 0).
    Given ``ratio`` and ``depth``, ``e^a = ratio**(2 (depth - 1))`` and the
    large-depth form ``ratio**(2L-2) / ((2L-2) log ratio)`` is returned unless
    ``exact`` is set.
    """
    if exponent is None:
        if ratio is None or depth is None:
            raise ValueError("give either exponent or both ratio and depth")
        if ratio < 1:
            raise ValueError(f"dilation_ratio must be >= 1, got {ratio}")
        if depth < 2:
            raise ValueError("depth must be >= 2")
        exponent = 2.0 * (depth - 1) * np.log(ratio)
        if not exact and ratio > 1:
            return float(ratio ** (2 * depth - 2) / ((2 * depth - 2) * np.log(ratio)))
    if exponent < 0:
        raise ValueError("exponent must be >= 0")
    if exponent == 0:
        return 1.0
    return float(np.expm1(exponent) / exponent)


def explicit_weights(D: np.ndarray, dt: float, alpha: float = 0.0):
    """Coefficients of one explicit step: ``(center, [(offset, weight), ...])``.

    In 2D the cross term uses the diagonal pair that keeps every neighbour
    weight nonnegative; this needs ``|D12| <= min(D11, D22)``.
    """
    D = np.atleast_2d(np.asarray(D, dtype=np.float64))
    if D.shape[0] == 1:
        w = D[0, 0] * dt
        pairs = [((1,), w), ((-1,), w)]
    else:
        d12 = D[0, 1]
        a = abs(d12)
        if a > min(D[0, 0], D[1, 1]):
            raise ValueError(
                f"cross diffusivity |D12|={a:g} exceeds min(D11, D22); the explicit scheme would lose positivity"
            )
        s = 1 if d12 >= 0 else -1
        w1, w2, wd = (D[0, 0] - a) * dt, (D[1, 1] - a) * dt, a * dt
        pairs = [((1, 0), w1), ((-1, 0), w1), ((0, 1), w2), ((0, -1), w2), ((1, s), wd), ((-1, -s), wd)]
    pairs = [(v, w) for v, w in pairs if w != 0]
    center = 1.0 - sum(w for _, w in pairs) - alpha * dt
    return center, pairs


def cfl_ratio(D: np.ndarray, dt: float) -> float:
    """Diffusive part of the explicit step; stable for ``<= 1/2`` (unit spacing)."""
    D = np.atleast_2d(D)
    if D.shape[0] == 1:
        return float(D[0, 0] * dt)
    return float((D[0, 0] + D[1, 1] - abs(D[0, 1])) * dt)


def solve_pde(model: DiffusionModel, steps: int, t_final: float = 1.0) -> Trajectory:
    """Forward-Euler trajectory on the model's lattice.

    ``pi <- pi + dt * (D(t_k) * lap(pi) - alpha(t_k) * pi + s(t_k))`` with
    centered second differences, evaluated as a nonnegative combination of
    shifted copies. Raises when a step breaks ``cfl_ratio <= 1/2`` or when
    absorption on top of diffusion would make the center weight negative.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    dt = t_final / steps
    periodic = model.grid.periodic
    init = model.initial
    field_ = init.field
    profiles = [init]
    for k in range(steps):
        t = k * dt
        D = model.D(t)
        ratio = cfl_ratio(D, dt)
        if ratio > 0.5:
            raise ValueError(f"CFL violated at t={t:g}: D*dt/h^2 = {ratio:g} > 0.5")
        a = model.alpha(t)
        center, pairs = explicit_weights(D, dt, a)
        if center < 0:
            raise ValueError(f"step too large at t={t:g}: 2*D*dt + alpha*dt = {1 - center:g} > 1")
        new = center * field_
        for v, w in pairs:
            new += w * shifted(field_, v, periodic)
        if model.source is not None:
            s = np.broadcast_to(
                np.asarray(model.source(t), dtype=np.float64).reshape((-1,) + model.grid.shape), field_.shape
            )
            if np.any(s < 0):
                raise ValueError(f"source density must be nonnegative (t={t:g})")
            new += dt * s
        field_ = new
        profiles.append(CapacityProfile(model.grid, field_.reshape(init.channels, -1)))
    times = tuple(k * dt for k in range(steps + 1))
    return Trajectory(profiles, model, times)


def duhamel_solution(model: DiffusionModel, t: float, steps: int = 1000,
                     kernel: str = "gaussian") -> CapacityProfile:
    """Source-driven solution from zero at time ``t`` by superposing heat
    kernels.

    Midpoint rule on the grid ``u_j = j * t / steps``: each slab injects
    ``dt * s(u_mid)`` and then spreads with covariance ``2 (V(t) - V(u_mid))``.
    ``model.initial`` only supplies the grid and channel count.
    """
    if model.has_absorption:
        raise ValueError("duhamel_solution needs zero absorption")
    if model.source is None:
        raise ValueError("duhamel_solution needs a source")
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    grid = model.grid
    C = model.initial.channels
    shape = (C,) + grid.shape
    out = np.zeros(shape)
    if t == 0:
        return CapacityProfile(grid, out.reshape(C, -1))
    dt = t / steps
    Vt = model.V(t)
    for j in range(steps):
        u = (j + 0.5) * dt
        s = np.broadcast_to(np.asarray(model.source(u), dtype=np.float64).reshape((-1,) + grid.shape), shape)
        if not np.any(s):
            continue
        if np.any(s < 0):
            raise ValueError(f"source density must be nonnegative (t={u:g})")
        k = heat_kernel(grid, Vt - model.V(u), kernel)
        out += dt * convolve_periodic(s, k)
    return CapacityProfile(grid, out.reshape(C, -1))


def leak_split_analytic(alpha, D: float, kappa_L: CapacityProfile) -> tuple[float, float]:
    """Mass reaching the input and mass leaked to the side inputs.

    Diffusion moves no mass and absorption is spatially uniform, so the input
    keeps ``exp(-int_0^1 alpha)`` of the total. ``D`` does not enter.
    """
    if isinstance(alpha, LeakSchedule):
        A = alpha.integral()
    elif callable(alpha):
        A, _ = integrate.quad(lambda s: float(alpha(s)), 0.0, 1.0, limit=200)
    else:
        A = float(alpha)
    total = kappa_L.mass
    mass_x = float(np.exp(-A) * total)
    return mass_x, total - mass_x
