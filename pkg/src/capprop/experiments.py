"""Studies that turn depth-scaling questions into numbers.

Each study expands its config into independent sweep points, evaluates them
(optionally in a process pool), and reduces the results in sweep-key order
into an :class:`ExperimentReport`. Mis-scaled control runs sit next to the
correctly scaled ones in every study that has a natural wrong scaling.
"""
from __future__ import annotations

import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import continuum, discrete, metrics
from .config import ConfigError, ExperimentConfig
from .core import CapacityProfile, second_moment

VERDICTS = ("shattering-divergent", "non-degenerate", "trivial-contraction")


@dataclass
class ExperimentReport:
    """Outcome of one study.

    ``records`` hold one entry per sweep point (``key`` plus ``metrics``),
    ``fits`` the power-law fits, ``classifications`` the per-exponent
    verdicts, and ``rules`` the thresholds and definitions that produced them.
    ``runtime_seconds`` is not serialized so reports stay byte-identical.
    """

    study: str
    config: dict
    seed: int
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    classifications: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    rules: dict = field(default_factory=dict)
    runtime_seconds: float | None = field(default=None, compare=False)

    def to_dict(self) -> dict:
        return _plain({
            "study": self.study,
            "seed": self.seed,
            "config": self.config,
            "rules": self.rules,
            "records": self.records,
            "fits": self.fits,
            "classifications": self.classifications,
            "summary": self.summary,
        })

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(
            study=d["study"],
            config=d["config"],
            seed=d["seed"],
            records=d["records"],
            fits=d["fits"],
            classifications=d["classifications"],
            summary=d["summary"],
            rules=d["rules"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        return cls.from_dict(json.loads(text))

    def metric(self, name: str) -> list:
        return [r["metrics"].get(name) for r in self.records]


def _plain(obj):
    """Recursively convert numpy scalars/arrays and tuples to JSON types;
    non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def parallel_map(fn: Callable, tasks: list, jobs: int = 1) -> list:
    """``[fn(t) for t in tasks]``, using up to ``jobs`` worker processes.
    Result order always follows ``tasks``."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, tasks))


def classify_exponent(e: float, tolerance: float = 0.05) -> str:
    if e > tolerance:
        return "shattering-divergent"
    if e < -tolerance:
        return "trivial-contraction"
    return "non-degenerate"


def _m2(cfg: ExperimentConfig) -> np.ndarray:
    return second_moment(cfg.generator())


def _expected_width(cfg: ExperimentConfig, steps: int, eps: float) -> float:
    return float(np.sqrt(eps * steps * np.trace(_m2(cfg))))


def _require_grid(cfg: ExperimentConfig, width: float, what: str, size: int | None = None):
    n = cfg.grid_size if size is None else size
    if 6 * width > n:
        raise ConfigError("grid.size", f"{what}: expected width {width:.3g} needs 6*width <= size, size is {n}")


def _stats(profile: CapacityProfile, cfg: ExperimentConfig) -> metrics.ProfileStats:
    try:
        return metrics.profile_stats(discrete.collapse_channels(profile), tol=cfg.support_tolerance)
    except metrics.AmbiguousCentroidError as exc:
        raise ConfigError("grid.size", f"profile wraps around the grid ({exc})") from None


def _spec(cfg: ExperimentConfig, variant: str, depth: int, **kw) -> discrete.ArchitectureSpec:
    args = dict(
        variant=variant,
        grid=cfg.grid(),
        depth=depth,
        capacity_rate=cfg.capacity_rate,
        scaling_exponent=cfg.scaling_exponent,
        generator=cfg.generator(),
    )
    args.update(kw)
    try:
        return discrete.ArchitectureSpec(**args)
    except ValueError as exc:
        raise ConfigError("architecture", str(exc)) from None


def _profile_errors(a: CapacityProfile, b: CapacityProfile, suffix: str) -> dict:
    return {f"{name}_{suffix}": metrics.lp_error(a, b, p) for name, p in (("l1", 1), ("l2", 2), ("linf", np.inf))}


def _continuum_errors(final: CapacityProfile, model: continuum.DiffusionModel, scale: float = 1.0) -> dict:
    out = {}
    for kernel in continuum.KERNELS:
        ref = continuum.heat_kernel_solution(model, 1.0, kernel)
        if scale != 1.0:
            ref = CapacityProfile(ref.grid, scale * ref.values)
        out.update(_profile_errors(final, ref, kernel))
    return out


# convergence


def _convergence_point(task):
    cfg, L = task
    spec = _spec(cfg, "multidim" if cfg.dim == 2 else "residual", L, scaling_exponent=1.0)
    kappa = cfg.input_profile(spec.grid)
    final = discrete.propagate_residual(spec, kappa).final
    model = continuum.DiffusionModel(kappa, spec.diffusivity())
    m = _continuum_errors(final, model)
    st = _stats(final, cfg)
    m.update(mass=final.mass, std_width=st.std_width, variance=st.total_variance, epsilon=spec.epsilon)
    return {"key": {"L": L}, "metrics": m}


def run_convergence(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Distance between the discrete output profile and the continuum heat
    kernel at t = 1 for increasing depth, with fitted rates ``err ~ L^-q``.

    Errors are reported against both the sampled Gaussian and the exact
    lattice heat kernel.
    """
    if cfg.study != "convergence":
        raise ConfigError("study", "expected convergence")
    width = _expected_width(cfg, 1, cfg.capacity_rate)
    _require_grid(cfg, width, "convergence")
    records = parallel_map(_convergence_point, [(cfg, L) for L in sorted(cfg.depths)], jobs)
    fits = {}
    for kernel in continuum.KERNELS:
        pts = [(r["key"]["L"], r["metrics"][f"l1_{kernel}"]) for r in records]
        if len(pts) >= 2 and all(y > 0 for _, y in pts):
            fit = metrics.fit_power_law(pts)
            fits[f"l1_{kernel}_vs_L"] = {**fit.to_dict(), "rate": -fit.exponent}
    return ExperimentReport(
        study=cfg.study,
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=records,
        fits=fits,
        summary={f"final_l1_{k}": records[-1]["metrics"][f"l1_{k}"] for k in continuum.KERNELS},
        rules={
            "diffusivity": "D = c * m2 / 2 (tensor c * M / 2 in 2D)",
            "rate": "q = -slope of log(L1 error) against log(L)",
            "kernels": "gaussian: sampled free-space kernel; lattice: exact kernel of the lattice second difference",
        },
    )


# scaling sweep


def _scaling_point(task):
    cfg, p, L = task
    spec = _spec(cfg, "multidim" if cfg.dim == 2 else "residual", L, scaling_exponent=p)
    predicted_var = spec.epsilon * spec.steps * float(np.trace(_m2(cfg)))
    m = {"epsilon": spec.epsilon, "predicted_variance": predicted_var, "grid_overflow": False}
    if 6 * np.sqrt(predicted_var) > cfg.grid_size:
        m.update(grid_overflow=True, std_width=None, variance=None, quantile_width_99=None)
        return {"key": {"p": p, "L": L}, "metrics": m}
    final = discrete.propagate_residual(spec, cfg.input_profile(spec.grid)).final
    try:
        st = metrics.profile_stats(final, tol=cfg.support_tolerance)
        m.update(std_width=st.std_width, variance=st.total_variance, quantile_width_99=st.quantile_width(0.99))
    except metrics.AmbiguousCentroidError:
        m.update(grid_overflow=True, std_width=None, variance=None, quantile_width_99=None)
    m["mass"] = final.mass
    return {"key": {"p": p, "L": L}, "metrics": m}


def run_scaling_sweep(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Width exponent ``e(p)`` of the output-to-input capacity spread against
    depth for each scaling exponent ``p``, classified against (1 - p) / 2."""
    if cfg.study != "scaling_sweep":
        raise ConfigError("study", "expected scaling_sweep")
    ps = sorted(cfg.exponents)
    Ls = sorted(cfg.depths)
    for p in ps:
        for L in Ls:
            eps = cfg.capacity_rate * (L - 1) ** (-p)
            if eps > 1:
                raise ConfigError("sweep.exponents", f"epsilon = {eps:.3g} > 1 for p={p}, L={L}")
    records = parallel_map(_scaling_point, [(cfg, p, L) for p in ps for L in Ls], jobs)
    tol = cfg.exponent_tolerance
    fits, classes = {}, []
    for p in ps:
        pts = [(r["key"]["L"] - 1, r["metrics"]["std_width"]) for r in records
               if r["key"]["p"] == p and not r["metrics"]["grid_overflow"] and r["metrics"]["std_width"]]
        predicted = (1 - p) / 2
        if len(pts) < 2:
            classes.append({"p": p, "exponent": None, "predicted": predicted, "verdict": "insufficient-data"})
            continue
        fit = metrics.fit_power_law(pts)
        fits[f"width_vs_layers_p={p}"] = fit.to_dict()
        classes.append({
            "p": p,
            "exponent": fit.exponent,
            "predicted": predicted,
            "deviation": fit.exponent - predicted,
            "verdict": classify_exponent(fit.exponent, tol),
            "predicted_verdict": classify_exponent(predicted, tol),
        })
    return ExperimentReport(
        study=cfg.study,
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=records,
        fits=fits,
        classifications=classes,
        rules={
            "epsilon": "c * (L - 1)^(-p)",
            "exponent": "slope of log(std_width) against log(L - 1)",
            "shattering-divergent": f"e > {tol}",
            "non-degenerate": f"|e| <= {tol}",
            "trivial-contraction": f"e < -{tol}",
            "predicted_exponent": "(1 - p) / 2",
        },
    )


# dilated receptive field


def _dilated_point(task):
    cfg, L = task
    spec = _spec(cfg, "dilated", L, dilation_ratio=cfg.dilation_ratio)
    d = spec.dilations()
    m2 = float(np.trace(_m2(cfg)))
    v_disc = spec.epsilon * m2 * float(np.sum(d.astype(float) ** 2)) / 2.0
    final = discrete.propagate_dilated(spec, cfg.input_profile(spec.grid)).final
    st = _stats(final, cfg)
    predicted = float(np.sqrt(2.0 * v_disc))
    lam = cfg.dilation_ratio
    D0 = spec.epsilon * spec.steps * m2 / 2.0
    v_exact = continuum.v_integral(lam, L, exact=True)
    return {
        "key": {"L": L},
        "metrics": {
            "std_width": st.std_width,
            "quantile_width_99": st.quantile_width(0.99),
            "predicted_width": predicted,
            "width_ratio": st.std_width / predicted,
            "discrete_V": v_disc,
            "smooth_V_exact": D0 * v_exact,
            "smooth_V_large_depth": D0 * continuum.v_integral(lam, L),
            "smooth_width": float(np.sqrt(2.0 * D0 * v_exact)),
            "receptive_field": lam ** L,
            "erf_scale": lam ** L / np.sqrt(L),
            "max_dilation": int(d.max()),
            "mass": final.mass,
        },
    }


def run_dilated_erf(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Effective receptive field of exponentially dilated stacks against the
    exact discrete variance law and against ``R_L / sqrt(L)``."""
    if cfg.study != "dilated_erf":
        raise ConfigError("study", "expected dilated_erf")
    m2 = float(np.trace(_m2(cfg)))
    r = cfg.generator().radius
    for L in cfg.depths:
        eps = cfg.capacity_rate * (L - 1) ** (-cfg.scaling_exponent)
        d = np.array([round(cfg.dilation_ratio ** j) for j in range(L - 1)], dtype=float)
        if cfg.grid_size <= 2 * r * d.max():
            raise ConfigError("grid.size", f"dilation {int(d.max())} at L={L} does not fit the grid")
        _require_grid(cfg, float(np.sqrt(eps * m2 * np.sum(d**2))), f"dilated L={L}")
    records = parallel_map(_dilated_point, [(cfg, L) for L in sorted(cfg.depths)], jobs)
    pts = [(r["metrics"]["erf_scale"], r["metrics"]["std_width"]) for r in records]
    fits = {}
    if len(pts) >= 2:
        fits["width_vs_erf_scale"] = metrics.fit_power_law(pts).to_dict()
    ratios = [r["metrics"]["width_ratio"] for r in records]
    return ExperimentReport(
        study=cfg.study,
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=records,
        fits=fits,
        summary={"min_width_ratio": min(ratios), "max_width_ratio": max(ratios)},
        rules={
            "dilation": "layer l uses round(ratio^(l-1))",
            "predicted_width": "sqrt(2 V), V = eps * m2 * sum(d^2) / 2",
            "erf_scale": "ratio^L / sqrt(L)",
        },
    )


# multichannel


def _multichannel_point(task):
    cfg, C = task
    L = cfg.depth
    grid = cfg.grid()
    gen = cfg.generator()
    ref_spec = _spec(cfg, "residual", L)
    ref = discrete.propagate_residual(ref_spec, cfg.input_profile(grid)).final
    ref_width = _stats(ref, cfg).std_width
    kappa = cfg.input_profile(grid, C)
    spec = _spec(cfg, "multichannel", L, channels=C, generator=gen)
    out = discrete.collapse_channels(discrete.propagate_multichannel(spec, kappa).final)
    ctrl_spec = _spec(cfg, "multichannel", L, channels=C, generator=gen, channel_scaling=False)
    ctrl = discrete.collapse_channels(discrete.propagate_multichannel(ctrl_spec, kappa).final)
    ctrl_width = _stats(ctrl, cfg).std_width
    return {
        "key": {"C": C},
        "metrics": {
            "epsilon": spec.epsilon,
            "deviation_l1": metrics.lp_error(out, ref, 1),
            "std_width": _stats(out, cfg).std_width,
            "reference_width": ref_width,
            "control_epsilon": ctrl_spec.epsilon,
            "control_width": ctrl_width,
            "control_width_ratio": ctrl_width / ref_width,
            "sqrt_C": math.sqrt(C),
            "mass": out.mass,
        },
    }


def run_multichannel_xavier(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Collapsed multichannel propagation with ``eps = c / (C (L-1))`` against
    the single-channel reference, plus the unscaled control."""
    if cfg.study != "multichannel_xavier":
        raise ConfigError("study", "expected multichannel_xavier")
    L = cfg.depth
    Cmax = max(cfg.channel_counts)
    eps = cfg.capacity_rate * (L - 1) ** (-cfg.scaling_exponent)
    if eps * Cmax > 1:
        raise ConfigError("architecture.depth", f"unscaled control needs c * C <= L - 1 (C={Cmax})")
    _require_grid(cfg, _expected_width(cfg, L - 1, eps * Cmax), "multichannel control")
    records = parallel_map(_multichannel_point, [(cfg, C) for C in sorted(cfg.channel_counts)], jobs)
    return ExperimentReport(
        study=cfg.study,
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=records,
        summary={
            "max_deviation_l1": max(r["metrics"]["deviation_l1"] for r in records),
            "max_control_ratio_error": max(
                abs(r["metrics"]["control_width_ratio"] / r["metrics"]["sqrt_C"] - 1) for r in records
            ),
        },
        rules={
            "epsilon": "c * (L-1)^(-p) / C",
            "control": "epsilon without the 1/C factor; width should grow by sqrt(C)",
            "blocks": "channel-uniform: every block uses the configured stencil",
        },
    )


# leak / bias


def _leak_point(task):
    cfg, a, L = task
    variant = cfg.variant if cfg.variant in ("leak", "bias") else "leak"
    spec = _spec(cfg, variant, L, leak=a)
    kappa = cfg.input_profile(spec.grid)
    res = discrete.propagate_with_leak(spec, kappa)
    mx_an, my_an = continuum.leak_split_analytic(a, 0.0, kappa)
    ctrl_leak = cfg.control_leak_fraction / spec.epsilon
    ctrl = discrete.propagate_with_leak(spec.replace(leak=ctrl_leak), kappa)
    total = kappa.mass
    return {
        "key": {"alpha": a, "L": L},
        "metrics": {
            "epsilon": spec.epsilon,
            "mass_x": res.input_mass,
            "mass_y": res.side_mass,
            "analytic_mass_x": mx_an,
            "analytic_mass_y": my_an,
            "relative_error_x": abs(res.input_mass - mx_an) / mx_an if mx_an > 0 else None,
            "conservation_error": abs(res.input_mass + res.side_mass + res.boundary_loss - total) / total,
            "boundary_loss": res.boundary_loss,
            "control_alpha": ctrl_leak,
            "control_mass_x": ctrl.input_mass,
            "control_vanishing": ctrl.input_mass < 1e-8,
        },
    }


def run_leak_split(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Discrete input/side capacity split against ``exp(-int alpha)``, with a
    control whose per-layer leak ``alpha * eps`` does not shrink with depth."""
    if cfg.study != "leak_split":
        raise ConfigError("study", "expected leak_split")
    for L in cfg.depths:
        eps = cfg.capacity_rate * (L - 1) ** (-cfg.scaling_exponent)
        _require_grid(cfg, _expected_width(cfg, L - 1, eps), f"leak L={L}")
        for a in cfg.leaks:
            if a * eps > 1:
                raise ConfigError("sweep.leaks", f"alpha * epsilon = {a * eps:.3g} > 1 at alpha={a}, L={L}")
    tasks = [(cfg, a, L) for a in sorted(cfg.leaks) for L in sorted(cfg.depths)]
    records = parallel_map(_leak_point, tasks, jobs)
    errs = [r["metrics"]["relative_error_x"] for r in records if r["metrics"]["relative_error_x"] is not None]
    return ExperimentReport(
        study=cfg.study,
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=records,
        summary={
            "max_relative_error_x": max(errs) if errs else 0.0,
            "max_conservation_error": max(r["metrics"]["conservation_error"] for r in records),
            "max_control_mass_x": max(r["metrics"]["control_mass_x"] for r in records),
        },
        rules={
            "analytic": "mass_x = exp(-int_0^1 alpha) * mass(kappa_L)",
            "control": f"alpha * epsilon held at {cfg.control_leak_fraction} for every L",
            "vanishing": "control mass_x < 1e-8",
        },
    )


# recurrent memory


def memory_length(side_masses: np.ndarray, total: float, fraction: float = 0.5) -> int | None:
    """Fewest most-recent steps whose side capacity reaches ``fraction`` of
    ``total``; None when the side inputs never collect that much."""
    cum = np.cumsum(side_masses)
    hit = np.flatnonzero(cum >= fraction * total * (1 - 1e-12))
    return int(hit[0]) + 1 if hit.size else None


def _recurrent_point(task):
    cfg, N = task
    spec = _spec(cfg, "recurrent", N, leak=cfg.leak)
    kappa = cfg.input_profile(spec.grid)
    res = discrete.propagate_recurrent(spec, kappa)
    M = memory_length(res.side_masses, kappa.mass)
    ctrl_spec = _spec(cfg, "recurrent", N, leak=cfg.leak, capacity_rate=cfg.control_epsilon, scaling_exponent=0.0)
    ctrl = discrete.propagate_recurrent(ctrl_spec, kappa)
    Mc = memory_length(ctrl.side_masses, kappa.mass)
    return {
        "key": {"N": N},
        "metrics": {
            "epsilon": spec.epsilon,
            "memory_length": M,
            "memory_fraction": None if M is None else M / N,
            "input_mass": res.input_mass,
            "side_mass": res.side_mass,
            "control_epsilon": ctrl_spec.epsilon,
            "control_memory_length": Mc,
            "control_memory_fraction": None if Mc is None else Mc / N,
        },
    }


def run_recurrent_memory(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    """Memory length of a leaky recurrent capacity flow: how many of the most
    recent inputs collect half of the output capacity."""
    if cfg.study != "recurrent_memory":
        raise ConfigError("study", "expected recurrent_memory")
    for N in cfg.depths:
        eps = cfg.capacity_rate * N ** (-cfg.scaling_exponent)
        if cfg.leak * max(eps, cfg.control_epsilon) > 1:
            raise ConfigError("architecture.leak", f"alpha * epsilon > 1 at N={N}")
        _require_grid(cfg, _expected_width(cfg, N, max(eps, cfg.control_epsilon)), f"recurrent N={N}")
    records = parallel_map(_recurrent_point, [(cfg, N) for N in sorted(cfg.depths)], jobs)
    rate = cfg.leak * cfg.capacity_rate
    limit = math.log(2) / rate if rate > 0 and math.log(2) / rate <= 1 else None
    return ExperimentReport(
        study=cfg.study,
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=records,
        summary={"predicted_memory_fraction": limit,
                 "final_memory_fraction": records[-1]["metrics"]["memory_fraction"]},
        rules={
            "memory_length": "smallest k such that the k most recent inputs hold >= 50% of mass(kappa_L)",
            "predicted": "ln 2 / (alpha c) when <= 1, else undefined",
            "control": f"epsilon fixed at {cfg.control_epsilon} independent of N",
        },
    )


# discrete vs continuum comparison


def _source_density(cfg: ExperimentConfig, grid):
    src = cfg.source
    if src["type"] == "one_hot":
        base = discrete.CapacityProfile(grid, np.eye(1, grid.size, grid.flat_index(grid.center))).values[0]
    else:
        from .core import gaussian_profile

        base = gaussian_profile(grid, float(src["sigma"])).values[0]
    mod = float(src.get("modulation", 0.0))
    return _Source(base, mod)


@dataclass(frozen=True)
class _Source:
    base: np.ndarray
    modulation: float

    def __call__(self, t: float) -> np.ndarray:
        return self.base * (1.0 + self.modulation * math.sin(2 * math.pi * t))


def run_compare(cfg: ExperimentConfig, jobs: int = 1):
    """Run one architecture and its continuum counterpart side by side.

    Returns ``(report, profiles)`` where ``profiles`` maps column names to
    per-site arrays of the final (channel-collapsed) profiles.
    """
    variant = cfg.variant
    L = cfg.depth
    grid = cfg.grid()
    extra = {}
    if variant == "dilated":
        extra["dilation_ratio"] = cfg.dilation_ratio
    if variant == "multichannel":
        extra["channels"] = cfg.channels
    if variant in ("leak", "bias", "recurrent"):
        extra["leak"] = cfg.leak
    spec = _spec(cfg, variant, L, **extra)
    m2 = _m2(cfg)
    _require_grid(cfg, float(np.sqrt(spec.epsilon * spec.steps * np.trace(m2) *
                                     np.mean(spec.dilations().astype(float) ** 2) *
                                     (spec.channels if variant == "multichannel" else 1))), "compare")
    m, profiles = {"epsilon": spec.epsilon}, {}
    D = spec.diffusivity()

    if variant in ("skip_source", "cumulative"):
        src = _source_density(cfg, grid)
        final = discrete.propagate_with_source(spec, src).final
        model = continuum.DiffusionModel(CapacityProfile.zeros(grid), D, source=src)
        for kernel in continuum.KERNELS:
            ref = continuum.duhamel_solution(model, 1.0, steps=spec.steps, kernel=kernel)
            m.update(_profile_errors(final, ref, kernel))
            profiles[f"continuum_{kernel}"] = ref.values[0]
        m["mass"] = final.mass
        m["continuum_reference"] = "duhamel_solution"
    else:
        kappa = cfg.input_profile(grid, spec.channels if variant == "multichannel" else 1)
        out = discrete.propagate(spec, kappa)
        if variant in ("leak", "bias", "recurrent"):
            mx, my = continuum.leak_split_analytic(spec.leak, float(D[0, 0]), kappa)
            final = out.input_capacity
            m.update(mass_x=out.input_mass, mass_y=out.side_mass, analytic_mass_x=mx, analytic_mass_y=my,
                     relative_error_x=abs(out.input_mass - mx) / mx if mx > 0 else None)
            scale = mx / kappa.mass
            model = continuum.DiffusionModel(kappa, D)
            m["continuum_reference"] = "leak_split_analytic"
        else:
            final = discrete.collapse_channels(out.final)
            kappa = discrete.collapse_channels(kappa)
            scale = 1.0
            if variant == "dilated":
                v = spec.epsilon * float(np.trace(m2)) * float(np.sum(spec.dilations().astype(float) ** 2)) / 2
                D = v * np.eye(grid.dim)
            model = continuum.DiffusionModel(kappa, D)
            m["continuum_reference"] = "heat_kernel_solution"
        for kernel in continuum.KERNELS:
            ref = continuum.heat_kernel_solution(model, 1.0, kernel)
            ref = CapacityProfile(grid, scale * ref.values)
            m.update(_profile_errors(final, ref, kernel))
            profiles[f"continuum_{kernel}"] = ref.values[0]
        m["mass"] = final.mass
    profiles = {"discrete": discrete.collapse_channels(final).values[0], **profiles}
    report = ExperimentReport(
        study="compare",
        config=cfg.to_dict(),
        seed=cfg.seed,
        records=[{"key": {"variant": variant, "L": L}, "metrics": m}],
        rules={"diffusivity": "D = eps * steps * m2 / 2", "kernels": "gaussian and lattice"},
    )
    return report, profiles


STUDY_RUNNERS = {
    "convergence": run_convergence,
    "scaling_sweep": run_scaling_sweep,
    "dilated_erf": run_dilated_erf,
    "multichannel_xavier": run_multichannel_xavier,
    "leak_split": run_leak_split,
    "recurrent_memory": run_recurrent_memory,
}


def run_study(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentReport:
    if cfg.study not in STUDY_RUNNERS:
        raise ConfigError("study", f"unknown study {cfg.study!r}; expected one of {sorted(STUDY_RUNNERS)}")
    start = time.perf_counter()
    report = STUDY_RUNNERS[cfg.study](cfg, jobs)
    report.runtime_seconds = time.perf_counter() - start
    return report
