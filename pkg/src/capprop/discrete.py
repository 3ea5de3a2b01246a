"""Layer-by-layer capacity propagation for the residual family of architectures.

Every step is a column-stochastic map ``I + eps * Delta`` acting on a capacity
profile, optionally followed by a leak into side inputs or preceded by a source
injection. Steps are indexed by reverse layer time ``t_k = k * dt``: step ``k``
carries capacity from layer ``L - k`` down to layer ``L - k - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .core import CapacityProfile, Grid, RngSpec, StencilGenerator, second_moment

VARIANTS = (
    "residual",
    "skip_source",
    "cumulative",
    "leak",
    "bias",
    "dilated",
    "multichannel",
    "multidim",
    "recurrent",
)


@dataclass(frozen=True)
class LeakSchedule:
    """Piecewise-constant nonnegative function on [0, 1].

    ``values[i]`` holds on ``[breaks[i-1], breaks[i])`` with implicit outer
    breaks at 0 and 1, so ``len(values) == len(breaks) + 1``.
    """

    values: tuple[float, ...]
    breaks: tuple[float, ...] = ()

    def __post_init__(self):
        values = tuple(float(v) for v in np.atleast_1d(self.values))
        breaks = tuple(float(b) for b in np.atleast_1d(self.breaks)) if len(self.breaks) else ()
        if len(values) != len(breaks) + 1:
            raise ValueError("leak schedule needs len(values) == len(breaks) + 1")
        if any(v < 0 or not np.isfinite(v) for v in values):
            raise ValueError("leak values must be finite and nonnegative")
        if breaks and (list(breaks) != sorted(breaks) or breaks[0] <= 0 or breaks[-1] >= 1):
            raise ValueError("leak breaks must be increasing inside (0, 1)")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "breaks", breaks)

    @classmethod
    def constant(cls, a: float) -> "LeakSchedule":
        return cls((a,))

    def __call__(self, t: float) -> float:
        return self.values[int(np.searchsorted(self.breaks, t, side="right"))]

    @property
    def max(self) -> float:
        return max(self.values)

    def integral(self, upto: float = 1.0) -> float:
        edges = np.concatenate([[0.0], self.breaks, [1.0]])
        lo = edges[:-1]
        hi = np.minimum(edges[1:], upto)
        return float(np.sum(np.asarray(self.values) * np.clip(hi - lo, 0.0, None)))


def as_leak_schedule(alpha) -> LeakSchedule:
    if isinstance(alpha, LeakSchedule):
        return alpha
    return LeakSchedule.constant(float(alpha))


GeneratorSpec = Union[StencilGenerator, Sequence[StencilGenerator]]


@dataclass(frozen=True)
class ArchitectureSpec:
    """Which architecture to simulate and with what scaling.

    The capacity rate is ``eps = c * steps**(-p)`` with ``steps = L - 1``
    (``N`` for recurrent networks). Multichannel runs divide by ``C`` unless
    ``channel_scaling`` is off, which is the mis-scaled control.

    ``generator`` is a single stencil or one per step; ``blocks`` is the
    ``C x C`` table used by the multichannel variant.
    """

    variant: str
    grid: Grid
    depth: int
    capacity_rate: float = 1.0
    scaling_exponent: float = 1.0
    generator: GeneratorSpec | None = None
    blocks: Sequence[Sequence[StencilGenerator]] | None = None
    leak: LeakSchedule | float = 0.0
    dilation_ratio: float = 1.0
    channels: int = 1
    channel_scaling: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if int(self.depth) != self.depth or self.depth < 2:
            raise ValueError(f"depth must be an integer >= 2, got {self.depth}")
        if not self.capacity_rate > 0:
            raise ValueError("capacity_rate must be positive")
        if self.scaling_exponent < 0:
            raise ValueError("scaling_exponent must be >= 0")
        if self.dilation_ratio < 1:
            raise ValueError(f"dilation_ratio must be >= 1, got {self.dilation_ratio}")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        object.__setattr__(self, "leak", as_leak_schedule(self.leak))

        if self.variant == "multichannel":
            if self.blocks is None:
                if self.generator is None:
                    raise ValueError("multichannel variant needs blocks or a generator")
                gen = self.generator
                object.__setattr__(
                    self, "blocks", tuple(tuple(gen for _ in range(self.channels)) for _ in range(self.channels))
                )
            blocks = tuple(tuple(row) for row in self.blocks)
            if len(blocks) != self.channels or any(len(row) != self.channels for row in blocks):
                raise ValueError(f"block table must be {self.channels}x{self.channels}")
            object.__setattr__(self, "blocks", blocks)
            gens = [g for row in blocks for g in row]
        else:
            if self.generator is None:
                raise ValueError(f"{self.variant} variant needs a generator")
            if isinstance(self.generator, StencilGenerator):
                gens = [self.generator]
            else:
                gens = list(self.generator)
                if len(gens) != self.steps:
                    raise ValueError(f"per-layer generator list needs {self.steps} entries, got {len(gens)}")
                object.__setattr__(self, "generator", tuple(gens))
        if any(g.dim != self.grid.dim for g in gens):
            raise ValueError("generator dimension does not match grid")

        eps = self.epsilon
        if not 0 < eps <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {eps}")
        if self.variant == "multichannel" and eps * self.channels > 1:
            raise ValueError(f"epsilon * channels must be <= 1, got {eps * self.channels}")
        if self.leak.max * eps > 1:
            raise ValueError(f"leak * epsilon must be <= 1, got {self.leak.max * eps}")

    @property
    def steps(self) -> int:
        return self.depth if self.variant == "recurrent" else self.depth - 1

    @property
    def dt(self) -> float:
        return 1.0 / self.steps

    @property
    def epsilon(self) -> float:
        eps = self.capacity_rate * float(self.steps) ** (-self.scaling_exponent)
        if self.variant == "multichannel" and self.channel_scaling:
            eps /= self.channels
        return eps

    def layer_generator(self, k: int) -> StencilGenerator:
        if isinstance(self.generator, StencilGenerator):
            return self.generator
        return self.generator[k]

    def dilations(self) -> np.ndarray:
        """Integer dilation used at each step, largest first.

        Layer ``l`` has dilation ``round(ratio**(l-1))``; step ``k`` runs layer
        ``L - k``'s weights, i.e. exponent ``L - 2 - k``.
        """
        if self.variant != "dilated" or self.dilation_ratio == 1:
            return np.ones(self.steps, dtype=np.int64)
        powers = np.arange(self.steps - 1, -1, -1)
        return np.array([int(round(self.dilation_ratio**j)) for j in powers], dtype=np.int64)

    def diffusivity(self) -> np.ndarray:
        """Continuum diffusion tensor ``c * M / 2`` matching this spec (undilated)."""
        gen = self.layer_generator(0) if self.variant != "multichannel" else self.blocks[0][0]
        c_eff = self.epsilon * self.steps * (self.channels if self.variant == "multichannel" else 1)
        return c_eff * second_moment(gen) / 2.0

    def replace(self, **changes) -> "ArchitectureSpec":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class Trajectory:
    """Profiles at successive reverse layer times.

    ``profiles[k]`` lives at ``times[k]``; ``spec`` is whatever produced the
    run (an ``ArchitectureSpec`` or a continuum model).
    """

    profiles: tuple[CapacityProfile, ...]
    spec: object = None
    times: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "profiles", tuple(self.profiles))
        if not self.times:
            n = len(self.profiles)
            times = tuple(np.linspace(0.0, 1.0, n)) if n > 1 else (0.0,)
            object.__setattr__(self, "times", times)

    def __len__(self):
        return len(self.profiles)

    def __getitem__(self, k):
        return self.profiles[k]

    @property
    def initial(self) -> CapacityProfile:
        return self.profiles[0]

    @property
    def final(self) -> CapacityProfile:
        return self.profiles[-1]

    def masses(self) -> np.ndarray:
        return np.array([p.mass for p in self.profiles])


@dataclass(frozen=True)
class LeakResult:
    """Capacity split between the input and the side inputs.

    ``side_masses[k]`` is the capacity diverted at step ``k``. For the bias
    variant only these scalars are kept and ``side_capacities`` is None.
    ``boundary_loss`` is capacity lost through absorbing edges.
    """

    trajectory: Trajectory
    side_masses: np.ndarray
    side_capacities: tuple[CapacityProfile, ...] | None
    input_capacity: CapacityProfile
    boundary_loss: float = 0.0

    @property
    def input_mass(self) -> float:
        return self.input_capacity.mass

    @property
    def side_mass(self) -> float:
        return float(np.sum(self.side_masses))

    def aggregated_side_capacity(self) -> CapacityProfile:
        if self.side_capacities is None:
            raise ValueError("side capacities were aggregated to scalar masses")
        total = np.sum([p.values for p in self.side_capacities], axis=0)
        return CapacityProfile(self.input_capacity.grid, total)


@dataclass(frozen=True)
class LayerOperator:
    """The capacity map ``(1 - eps) I + eps * G`` of one residual layer."""

    generator: StencilGenerator
    epsilon: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")

    def apply_field(self, field: np.ndarray, periodic: bool) -> np.ndarray:
        mix = self.generator.apply(field, periodic)
        return (1.0 - self.epsilon) * field + self.epsilon * mix

    def __call__(self, profile: CapacityProfile) -> CapacityProfile:
        out = self.apply_field(profile.field, profile.grid.periodic)
        return CapacityProfile(profile.grid, out.reshape(profile.channels, -1))

    def coefficients(self) -> dict[tuple[int, ...], float]:
        """Offset -> operator coefficient, zero offset included."""
        coefs = {(0,) * self.generator.dim: 1.0 - self.epsilon}
        for v, r in zip(self.generator.offsets, self.generator.rates):
            coefs[v] = self.epsilon * r
        return coefs


def build_operator(gen: StencilGenerator, epsilon: float) -> LayerOperator:
    return LayerOperator(gen, float(epsilon))


@dataclass(frozen=True)
class WeightStencil:
    """Signed convolution weights whose elementwise squares give a layer's
    capacity operator."""

    offsets: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.offsets, self.weights))

    def capacity_coefficients(self) -> dict[tuple[int, ...], float]:
        return {v: w * w for v, w in zip(self.offsets, self.weights)}


def weights_from_operator(gen: StencilGenerator, epsilon: float, rng: RngSpec) -> WeightStencil:
    """Weights with ``w_0 = sqrt(1 - eps)`` and ``w_v = ±sqrt(eps * rate_v)``.

    Off-diagonal signs are drawn from ``rng``; the pass-through weight stays
    positive. Off-diagonal magnitudes therefore scale as ``sqrt(eps)``.
    """
    op = build_operator(gen, epsilon)
    coefs = op.coefficients()
    signs = rng.generator().choice(np.array([-1.0, 1.0]), size=len(gen.offsets))
    offsets = list(coefs)
    weights = [np.sqrt(coefs[offsets[0]])]
    weights += [s * np.sqrt(coefs[v]) for s, v in zip(signs, offsets[1:])]
    return WeightStencil(tuple(offsets), tuple(float(w) for w in weights))


def _check_input(spec: ArchitectureSpec, kappa: CapacityProfile, variants: Sequence[str]):
    if spec.variant not in variants:
        raise ValueError(f"expected variant in {tuple(variants)}, got {spec.variant!r}")
    if kappa.grid != spec.grid:
        raise ValueError(f"profile grid {kappa.grid} does not match spec grid {spec.grid}")
    expected = spec.channels if spec.variant == "multichannel" else kappa.channels
    if kappa.channels != expected:
        raise ValueError(f"profile has {kappa.channels} channels, spec expects {expected}")


def _check_dilations(spec: ArchitectureSpec, dilations: np.ndarray):
    reach = int(dilations.max()) * max(spec.layer_generator(k).radius for k in range(spec.steps))
    if min(spec.grid.shape) <= 2 * reach:
        raise ValueError(
            f"dilated stencil reach {reach} needs more than {2 * reach} sites per axis, grid is {spec.grid.shape}"
        )


def _diffuse(spec: ArchitectureSpec, kappa: CapacityProfile, dilations: np.ndarray) -> Trajectory:
    eps = spec.epsilon
    periodic = spec.grid.periodic
    field_ = kappa.field
    profiles = [kappa]
    for k in range(spec.steps):
        op = LayerOperator(spec.layer_generator(k).dilated(int(dilations[k])), eps)
        field_ = op.apply_field(field_, periodic)
        profiles.append(CapacityProfile(spec.grid, field_.reshape(kappa.channels, -1)))
    return Trajectory(profiles, spec)


def propagate_residual(spec: ArchitectureSpec, kappa_L: CapacityProfile) -> Trajectory:
    """Apply the layer operator ``L - 1`` times starting from the output layer.

    The multidim variant is the same computation on a 2D grid.
    """
    _check_input(spec, kappa_L, ("residual", "multidim"))
    return _diffuse(spec, kappa_L, spec.dilations())


def propagate_dilated(spec: ArchitectureSpec, kappa_L: CapacityProfile) -> Trajectory:
    """Residual propagation where step ``k`` uses the generator with offsets
    multiplied by the layer's dilation.

    For a one-hot input the variance after all layers is exactly
    ``eps * m2 * sum(d**2)`` until the profile wraps.
    """
    _check_input(spec, kappa_L, ("dilated",))
    dilations = spec.dilations()
    _check_dilations(spec, dilations)
    return _diffuse(spec, kappa_L, dilations)


def propagate_with_source(
    spec: ArchitectureSpec, source_density: Callable[[float], np.ndarray]
) -> Trajectory:
    """Diffuse from zero while injecting ``dt * s(t_k)`` after each step.

    ``source_density(t)`` returns the (already rescaled) injection rate at
    every site, shaped like the grid or like ``(channels, sites)``. For
    cumulative capacity pass each layer's own capacity density as the source.
    """
    if spec.variant not in ("skip_source", "cumulative"):
        raise ValueError(f"expected variant skip_source or cumulative, got {spec.variant!r}")
    eps, dt = spec.epsilon, spec.dt
    periodic = spec.grid.periodic
    zero = CapacityProfile.zeros(spec.grid, spec.channels)
    field_ = zero.field
    profiles = [zero]
    for k in range(spec.steps):
        s = np.asarray(source_density(k * dt), dtype=np.float64)
        try:
            s = np.broadcast_to(s.reshape((-1,) + spec.grid.shape), field_.shape)
        except ValueError:
            raise ValueError(f"source shape {s.shape} does not match grid {spec.grid.shape}") from None
        if np.any(s < 0):
            raise ValueError(f"source density must be nonnegative (t={k * dt:g})")
        op = LayerOperator(spec.layer_generator(k), eps)
        field_ = op.apply_field(field_, periodic) + dt * s
        profiles.append(CapacityProfile(spec.grid, field_.reshape(spec.channels, -1)))
    return Trajectory(profiles, spec)


def _leak_run(spec: ArchitectureSpec, kappa: CapacityProfile, keep_side: bool) -> LeakResult:
    eps, dt = spec.epsilon, spec.dt
    periodic = spec.grid.periodic
    field_ = kappa.field
    profiles = [kappa]
    side_profiles = []
    side_masses = np.empty(spec.steps)
    for k in range(spec.steps):
        a_eps = spec.leak(k * dt) * eps
        side = a_eps * field_
        side_masses[k] = side.sum()
        if keep_side:
            side_profiles.append(CapacityProfile(spec.grid, side.reshape(kappa.channels, -1)))
        op = LayerOperator(spec.layer_generator(k), eps)
        field_ = (1.0 - a_eps) * op.apply_field(field_, periodic)
        profiles.append(CapacityProfile(spec.grid, field_.reshape(kappa.channels, -1)))
    trajectory = Trajectory(profiles, spec)
    loss = kappa.mass - trajectory.final.mass - side_masses.sum()
    return LeakResult(
        trajectory=trajectory,
        side_masses=side_masses,
        side_capacities=tuple(side_profiles) if keep_side else None,
        input_capacity=trajectory.final,
        boundary_loss=0.0 if periodic else float(loss),
    )


def propagate_with_leak(spec: ArchitectureSpec, kappa_L: CapacityProfile) -> LeakResult:
    """Each step diverts ``alpha(t_k) * eps`` of the capacity to the side input
    and diffuses the rest: ``kappa' = (1 - alpha eps) (I + eps Delta) kappa``.

    The split is exactly conservative; the bias variant keeps only the per
    layer side masses.
    """
    _check_input(spec, kappa_L, ("leak", "bias"))
    return _leak_run(spec, kappa_L, keep_side=spec.variant == "leak")


def propagate_recurrent(spec: ArchitectureSpec, kappa_L: CapacityProfile) -> LeakResult:
    """Leak propagation along real time for a recurrent net with ``N`` inputs.

    ``side_capacities[k]`` is the capacity given to the input ``k`` steps
    before the output; ``input_capacity`` is what reaches the initial state.
    Identical to :func:`propagate_with_leak` on a leak spec with
    ``depth = N + 1``.
    """
    _check_input(spec, kappa_L, ("recurrent",))
    return _leak_run(spec, kappa_L, keep_side=True)


def propagate_multichannel(spec: ArchitectureSpec, kappa_L: CapacityProfile) -> Trajectory:
    """Coupled propagation of ``C`` channels.

    Block ``(c, c')`` moves capacity from channel ``c'`` into channel ``c``
    at rate ``eps`` along its stencil, so each (channel, site) column loses
    ``eps * C`` in total and keeps ``1 - eps * C``.
    """
    _check_input(spec, kappa_L, ("multichannel",))
    eps = spec.epsilon
    C = spec.channels
    periodic = spec.grid.periodic
    field_ = kappa_L.field
    profiles = [kappa_L]
    for _ in range(spec.steps):
        out = np.empty_like(field_)
        for c in range(C):
            mix = None
            for cp in range(C):
                term = spec.blocks[c][cp].apply(field_[cp : cp + 1], periodic)
                mix = term if mix is None else mix + term
            out[c] = ((1.0 - eps * C) * field_[c : c + 1] + eps * mix)[0]
        field_ = out
        profiles.append(CapacityProfile(spec.grid, field_.reshape(C, -1)))
    return Trajectory(profiles, spec)


def collapse_channels(profile: CapacityProfile) -> CapacityProfile:
    """Sitewise sum over channels."""
    if profile.channels == 1:
        return profile
    return CapacityProfile(profile.grid, profile.values.sum(axis=0, keepdims=True))


def propagate(spec: ArchitectureSpec, kappa_L: CapacityProfile):
    """Dispatch to the propagator for ``spec.variant`` (source variants excluded)."""
    table = {
        "residual": propagate_residual,
        "multidim": propagate_residual,
        "dilated": propagate_dilated,
        "leak": propagate_with_leak,
        "bias": propagate_with_leak,
        "recurrent": propagate_recurrent,
        "multichannel": propagate_multichannel,
    }
    if spec.variant not in table:
        raise ValueError(f"{spec.variant} needs a source density; use propagate_with_source")
    return table[spec.variant](spec, kappa_L)
