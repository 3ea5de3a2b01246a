"""Acceptance criteria 1-11, one PASS/FAIL line each.

Every test records its verdict before asserting, so the terminal summary
shows all eleven lines even when some fail.
"""
import json
import math

import mpmath
import numpy as np
import pytest
import yaml

from capprop import cli, experiments as ex
from capprop.config import ExperimentConfig
from capprop.continuum import DiffusionModel, duhamel_solution, solve_pde, v_integral
from capprop.core import (
    CapacityProfile,
    Grid,
    RngSpec,
    StencilGenerator,
    gaussian_profile,
    make_one_hot,
    random_generator,
    second_moment,
)
from capprop.discrete import (
    ArchitectureSpec,
    LeakSchedule,
    propagate,
    propagate_recurrent,
    propagate_with_leak,
    propagate_with_source,
)
from capprop.metrics import lp_error
from conftest import ACCEPTANCE_LINES


def verdict(key, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{key}] {title}: {detail}"
    ACCEPTANCE_LINES[key] = line
    print(line)
    assert ok, line


def cfg(study, **sections):
    return ExperimentConfig.from_dict({"schema_version": 1, "study": study, **sections})


def rel(a, b):
    return abs(a - b) / abs(b)


# 1. conservation -----------------------------------------------------------

def _conservation_errors():
    line = Grid.line(512)
    sym = StencilGenerator.symmetric(1)
    rnd = random_generator(RngSpec(1), 2, 1)
    one_hot = make_one_hot(line, 256)
    errs = {}
    for variant, kw in [("residual", {"generator": rnd}),
                        ("dilated", {"generator": sym, "dilation_ratio": 1.005}),
                        ("leak", {"generator": sym, "leak": 1.0}),
                        ("bias", {"generator": rnd, "leak": LeakSchedule((0.5, 2.0, 1.0), (0.3, 0.7))})]:
        spec = ArchitectureSpec(variant, line, 1024, generator=kw.pop("generator"), **kw)
        out = propagate(spec, one_hot)
        if variant in ("leak", "bias"):
            side = np.concatenate([[0.0], np.cumsum(out.side_masses)])
            totals = out.trajectory.masses() + side
        else:
            totals = out.masses()
        errs[variant] = float(np.max(np.abs(totals - 1.0)))

    rec = ArchitectureSpec("recurrent", line, 1024, generator=sym, leak=1.0)
    out = propagate_recurrent(rec, one_hot)
    errs["recurrent"] = abs(out.input_mass + out.side_mass - 1.0)

    mc = ArchitectureSpec("multichannel", line, 1024, generator=rnd, channels=4)
    start = CapacityProfile(line, np.stack([make_one_hot(line, 200 + 20 * c).values[0] for c in range(4)]))
    masses = propagate(mc, start).masses()
    errs["multichannel"] = float(np.max(np.abs(masses - 4.0)) / 4.0)

    sq = Grid.square(48)
    md = ArchitectureSpec("multidim", sq, 1024, generator=random_generator(RngSpec(2), 1, 2))
    errs["multidim"] = float(np.max(np.abs(propagate(md, make_one_hot(sq, (24, 24))).masses() - 1.0)))

    bump = gaussian_profile(line, 16.0).values[0]
    for variant in ("skip_source", "cumulative"):
        spec = ArchitectureSpec(variant, line, 1024, generator=sym)
        traj = propagate_with_source(spec, lambda t: (1.0 + t) * bump)
        injected = np.concatenate([[0.0], np.cumsum([spec.dt * (1.0 + k * spec.dt) * bump.sum()
                                                     for k in range(spec.steps)])])
        errs[variant] = float(np.max(np.abs(traj.masses()[1:] - injected[1:]) / injected[1:]))
    return errs


def test_1_conservation():
    errs = _conservation_errors()
    worst = max(errs, key=errs.get)
    verdict("1", "mass conservation over 1024 layers, all variants", errs[worst] <= 1e-12,
            f"worst {worst} rel err {errs[worst]:.2e} (tol 1e-12, {len(errs)} variants)")


# 2. exact variance law --------------------------------------------------------

def _variance_errors():
    errs = []
    cases = [("residual", 257, 1.0, StencilGenerator.symmetric(1), 2048),
             ("residual", 129, 1.0, StencilGenerator.from_mapping({1: 1, -1: 1, 2: 0.5, -2: 0.5, 3: 0.2, -3: 0.2}), 2048),
             ("dilated", 9, 2.0, StencilGenerator.symmetric(1), 2048),
             ("dilated", 12, 1.5, StencilGenerator.from_mapping({1: 2, -1: 2, 2: 1, -2: 1}), 2048)]
    for variant, L, ratio, gen, n in cases:
        grid = Grid.line(n)
        spec = ArchitectureSpec(variant, grid, L, generator=gen, dilation_ratio=ratio)
        traj = propagate(spec, make_one_hot(grid, n // 2))
        m2 = second_moment(gen)[0, 0]
        d2 = np.cumsum(spec.dilations().astype(float) ** 2)
        x = np.arange(n) - n // 2
        for k in range(1, len(traj)):
            v = traj[k].values[0]
            mean = float(np.dot(x, v))
            var = float(np.dot((x - mean) ** 2, v))
            pred = spec.epsilon * m2 * d2[k - 1]
            errs.append(abs(var - pred) / max(1.0, pred))
    return max(errs), len(errs)


def test_2_variance_law():
    worst, count = _variance_errors()
    verdict("2", "variance = eps*m2*sum d^2 (residual and dilated)", worst <= 1e-10,
            f"max rel err {worst:.2e} over {count} layer checks (tol 1e-10)")


# 3. discrete to continuum convergence --------------------------------------------

@pytest.fixture(scope="module")
def convergence_report():
    return ex.run_convergence(cfg("convergence", grid={"size": 512},
                                  sweep={"depths": [17, 33, 65, 129, 257]}))


def test_3_convergence_gaussian(convergence_report):
    fit = convergence_report.fits["l1_gaussian_vs_L"]
    final = convergence_report.summary["final_l1_gaussian"]
    ok = fit["rate"] >= 0.9 and final <= 0.02
    verdict("3", "L1 vs sampled Gaussian heat kernel, rate >= 0.9 and L1(257) <= 0.02", ok,
            f"rate {fit['rate']:.3f}, L1(257) {final:.4f}")


def test_3b_convergence_lattice(convergence_report):
    fit = convergence_report.fits["l1_lattice_vs_L"]
    final = convergence_report.summary["final_l1_lattice"]
    ok = fit["rate"] >= 0.9 and final <= 0.02
    verdict("3b", "L1 vs lattice heat kernel, rate >= 0.9 and L1(257) <= 0.02", ok,
            f"rate {fit['rate']:.3f}, L1(257) {final:.5f}")


# 4. scaling sweep -------------------------------------------------------------

def test_4_scaling_sweep():
    r = ex.run_scaling_sweep(cfg("scaling_sweep", grid={"size": 1024},
                                 sweep={"depths": [17, 33, 65, 129, 257], "exponents": [0.5, 1.0, 2.0]}))
    expected = {0.5: "shattering-divergent", 1.0: "non-degenerate", 2.0: "trivial-contraction"}
    got = {c["p"]: (c["exponent"], c["verdict"]) for c in r.classifications}
    ok = set(got) == set(expected) and all(
        abs(e - (1 - p) / 2) <= 0.05 and v == expected[p] for p, (e, v) in got.items())
    detail = ", ".join(f"p={p}: e={e:+.4f} {v}" for p, (e, v) in sorted(got.items()))
    verdict("4", "width exponent (1-p)/2 +- 0.05 and classification", ok, detail)


# 5. Duhamel vs PDE ------------------------------------------------------------

def test_5_duhamel_vs_pde():
    g = Grid.line(256)
    bump = gaussian_profile(g, 9.0).values[0]
    model = DiffusionModel(CapacityProfile.zeros(g), diffusivity=2.0, source=lambda t: (1.0 + t) * bump)
    pde = solve_pde(model, 1000).final
    duh = duhamel_solution(model, 1.0, 1000)
    err = lp_error(duh, pde, 1)
    verdict("5", "Duhamel vs explicit PDE with the same source, n=256, 1000 steps", err <= 5e-3,
            f"L1 {err:.2e} (tol 5e-3)")


# 6. leak split ----------------------------------------------------------------

def test_6_leak_split():
    r = ex.run_leak_split(cfg("leak_split", grid={"size": 512},
                              sweep={"depths": [257], "leaks": [0.5, 1.0, 2.0]}))
    errs = {rec["key"]["alpha"]: rec["metrics"]["relative_error_x"] for rec in r.records}
    ctrl = max(rec["metrics"]["control_mass_x"] for rec in r.records)
    ok = len(errs) == 3 and max(errs.values()) <= 0.01 and ctrl < 1e-8
    detail = ", ".join(f"alpha={a}: {e:.2%}" for a, e in sorted(errs.items()))
    verdict("6", "mass split within 1% of exp(-int alpha) at L=257; control below 1e-8", ok,
            f"{detail}; control mass_x {ctrl:.1e}")


# 7. multichannel --------------------------------------------------------------

def test_7_multichannel():
    r = ex.run_multichannel_xavier(cfg("multichannel_xavier", grid={"size": 512},
                                       architecture={"depth": 65}, sweep={"channels": [1, 2, 4, 8]}))
    recs = [rec for rec in r.records if rec["key"]["C"] in (2, 4, 8)]
    dev = max(rec["metrics"]["deviation_l1"] for rec in recs)
    ratio_err = max(abs(rec["metrics"]["control_width_ratio"] / math.sqrt(rec["key"]["C"]) - 1) for rec in recs)
    ok = len(recs) == 3 and dev <= 1e-12 and ratio_err <= 0.05
    verdict("7", "channel collapse exact; unscaled control widens by sqrt(C) +- 5%", ok,
            f"max deviation {dev:.1e}, max control ratio error {ratio_err:.1e}")


# 8. dilated ERF ---------------------------------------------------------------

def test_8_dilated_erf():
    r = ex.run_dilated_erf(cfg("dilated_erf", grid={"size": 4096}, architecture={"dilation_ratio": 2.0},
                               sweep={"depths": [4, 5, 6, 7, 8, 9]}))
    ratios = [rec["metrics"]["width_ratio"] for rec in r.records]
    e = r.fits["width_vs_erf_scale"]["exponent"]
    ok = len(ratios) == 6 and all(0.98 <= q <= 1.02 for q in ratios) and abs(e - 1) <= 0.1
    verdict("8", "width / sqrt(2 var) in [0.98, 1.02]; exponent vs ratio^L/sqrt(L) = 1 +- 0.1", ok,
            f"ratios [{min(ratios):.4f}, {max(ratios):.4f}], exponent {e:.3f}")


# 9. V(1) ----------------------------------------------------------------------

def test_9_v_integral():
    errs = {}
    for a in (0.1, math.log(4), 5.0):
        with mpmath.workdps(30):
            ref = float(mpmath.quad(lambda t: mpmath.exp(a * (1 - t)), [0, 1]))
        errs[a] = rel(v_integral(exponent=a), ref)
    worst = max(errs.values())
    verdict("9", "V(1) for D(t)=exp(a(1-t)) vs independent quadrature", worst <= 1e-10,
            f"max rel err {worst:.1e} (tol 1e-10)")


# 10. recurrent ----------------------------------------------------------------

def test_10_recurrent():
    grid = Grid.line(256)
    gen = StencilGenerator.symmetric(1)
    start = make_one_hot(grid, 128)
    N = 1024
    rec = propagate_recurrent(ArchitectureSpec("recurrent", grid, N, generator=gen, leak=1.0), start)
    leak = propagate_with_leak(ArchitectureSpec("leak", grid, N + 1, generator=gen, leak=1.0), start)
    bit_equal = (np.array_equal(rec.side_masses, leak.side_masses)
                 and np.array_equal(rec.input_capacity.values, leak.input_capacity.values)
                 and all(np.array_equal(a.values, b.values)
                         for a, b in zip(rec.side_capacities, leak.side_capacities)))
    r = ex.run_recurrent_memory(cfg("recurrent_memory", grid={"size": 256},
                                    architecture={"capacity_rate": 1.0, "leak": 1.0}, sweep={"depths": [N]}))
    frac = r.records[0]["metrics"]["memory_fraction"]
    err = rel(frac, math.log(2))
    ok = bit_equal and err <= 0.03
    verdict("10", "recurrent == leak with depth N+1 bitwise; M(N)/N within 3% of ln 2", ok,
            f"bit-equal {bit_equal}, M/N {frac:.5f} (rel err {err:.2%})")


# 11. determinism --------------------------------------------------------------

def _bundle(out):
    doc = json.loads((out / "manifest.json").read_text())
    return {f["path"]: (out / f["path"]).read_bytes() for f in doc["files"]}, doc["files"]


def test_11_determinism(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text(yaml.safe_dump({"schema_version": 1, "study": "scaling_sweep", "grid": {"size": 1024},
                                    "sweep": {"depths": [17, 33, 65, 129], "exponents": [0.5, 1.0, 2.0]}}))
    runs = {}
    for name, jobs in (("a", 1), ("b", 1), ("c", 4)):
        code = cli.main(["sweep", "--config", str(path), "--out", str(tmp_path / name),
                         "--seed", "42", "--jobs", str(jobs)])
        assert code == 0
        runs[name] = _bundle(tmp_path / name)
    same_rerun = runs["a"] == runs["b"]
    same_jobs = runs["a"] == runs["c"]
    verdict("11", "byte-identical bundles across reruns and --jobs", same_rerun and same_jobs,
            f"rerun identical {same_rerun}, jobs 1 vs 4 identical {same_jobs}, {len(runs['a'][0])} files")
