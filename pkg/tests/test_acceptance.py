"""Acceptance gate: one check per shipped guarantee, one PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to see the per-criterion
lines; each test also fails loudly through the usual assert channel.
"""

import hashlib
import json
import subprocess
import sys
import time

import numpy as np

from enfold import aim
from enfold.cli import main as cli_main
from enfold.energy import (
    BetaMode,
    EnergyConfig,
    RhoKind,
    e1,
    e2,
    gamma_weights,
    grad_e1,
    grad_e2,
    grad_tilde_e1,
    tilde_e1,
)
from enfold.grad import MetaHead, grad_check
from enfold.harness import (
    ExperimentKind,
    ExperimentSpec,
    exp_aim_trace,
    exp_energy_curves,
    exp_raster_S,
    exp_raster_T,
)
from enfold.numerics import RngStream, finite_diff_grad
from enfold.unfold import LayerWeights, StackConfig, attention_update

ALL_KINDS = [RhoKind.NEG_EXP, RhoKind.LOG_PLUS2, RhoKind.LOG_PLUS1]


def _report(num, ok, desc):
    print(f"[PRIMARY {num:02d}] {'PASS' if ok else 'FAIL'} {desc}")
    assert ok, f"criterion {num}: {desc}"


def test_criterion_01_attention_descends_500_instances():
    cfg = EnergyConfig(rho=RhoKind.NEG_EXP, beta_mode=BetaMode.REWEIGHTED)
    start = time.perf_counter()
    worst = -np.inf
    for seed in range(500):
        gen = RngStream(seed, 201).generator()
        n = int(gen.integers(2, 17))
        d = int(gen.integers(1, 9))
        Y = gen.standard_normal((n, d))
        v = e1(Y, cfg)
        for _ in range(50):
            Y = attention_update(Y, cfg)
            v_next = e1(Y, cfg)
            worst = max(worst, v_next - v)
            v = v_next
    elapsed = time.perf_counter() - start
    _report(1, worst <= 1e-10 and elapsed < 60.0,
            f"softmax step never raises the pairwise energy over 500 instances "
            f"(worst increase {worst:.3e}, {elapsed:.1f}s)")


def test_criterion_02_majorization_and_tangency():
    worst_slack = -np.inf
    worst_tangent = 0.0
    for i in range(1000):
        kind = ALL_KINDS[i % 3]
        gen = RngStream(i, 202).generator()
        n = int(gen.integers(2, 9))
        d = int(gen.integers(1, 7))
        Y0 = gen.standard_normal((n, d)) * gen.uniform(0.2, 2.0)
        Y = Y0 + gen.standard_normal((n, d)) * gen.uniform(0.01, 2.0)
        cfg = EnergyConfig(rho=kind)
        G0 = gamma_weights(Y0, kind)
        slack = (e1(Y, cfg) - e1(Y0, cfg)) - (tilde_e1(Y, G0, cfg) - tilde_e1(Y0, G0, cfg))
        worst_slack = max(worst_slack, slack)
        ga = grad_e1(Y0, cfg)
        gt = grad_tilde_e1(Y0, G0, cfg)
        worst_tangent = max(worst_tangent,
                            np.linalg.norm(ga - gt) / max(np.linalg.norm(ga), 1e-12))
    _report(2, worst_slack <= 1e-10 and worst_tangent <= 1e-8,
            f"quadratic surrogate majorizes with tangent gradients over 1000 pairs "
            f"(worst slack {worst_slack:.3e}, worst tangent err {worst_tangent:.3e})")


def _random_pair(seed, t_scale=0.6):
    gen = RngStream(seed, 203).generator()
    f = aim.QuadraticObjective(aim.TransformSide.LEFT,
                               t_scale * gen.standard_normal((4, 4)),
                               gen.standard_normal((4, 3)))
    g = aim.QuadraticObjective(aim.TransformSide.RIGHT,
                               t_scale * gen.standard_normal((3, 3)),
                               gen.standard_normal((4, 3)))
    return f, g, gen


def test_criterion_03_certified_smooth_descent_100_traces():
    violations = 0
    flagged = 0
    for seed in range(100):
        f, g, gen = _random_pair(seed)
        prof = aim.SmoothnessProfile.from_pair(f, g, 0.1)
        alpha2 = 1.0 / prof.L_h
        y0 = 2.0 * gen.standard_normal((4, 3))
        tr = aim.run_algorithm1(f, g, y0, alpha2 / 2.0, alpha2, 1000)
        for k in range(1000):
            if tr.cert_flags[k]:
                flagged += 1
                if tr.h_values[k + 1] > tr.h_values[k] + 1e-9:
                    violations += 1
    _report(3, violations == 0 and flagged > 0,
            f"certified steps always descend across 100 runs of 1000 steps "
            f"({flagged} flagged steps, {violations} violations)")


def test_criterion_04_ball_membership_implies_certified_ratio():
    checked = 0
    violations = 0
    seed = 0
    while checked < 1000:
        gen = RngStream(seed, 204).generator()
        seed += 1
        f = aim.QuadraticObjective(aim.TransformSide.LEFT, 3.0 * np.eye(3),
                                   gen.standard_normal((3, 2)))
        g = aim.QuadraticObjective(aim.TransformSide.RIGHT, 3.0 * np.eye(2),
                                   gen.standard_normal((3, 2)))
        prof = aim.SmoothnessProfile.from_pair(f, g, 0.5)
        yf, yg, yh = aim.optimal_points(f, g)
        C = aim.bound_C(0.5, 0.5, prof.L_g)
        spec = aim.RegionSpec(C=C, C_prime=aim.bound_Cprime(0.5, 0.5, 0.5, 0.5,
                                                            prof.c_P, prof.L_g),
                              kappa=0.5, y_f_star=yf, y_g_star=yg, y_h_star=yh)
        for _ in range(25):
            y = yf + gen.uniform(0.0, 2.0) * gen.standard_normal((3, 2))
            if not aim.region_S_contains(y, spec, prof):
                continue
            gf = f.grad(y)
            gh = gf + g.grad(y)
            if np.linalg.norm(gf) / np.linalg.norm(gh) > C + 1e-9:
                violations += 1
            checked += 1
    _report(4, violations == 0,
            f"distance-ratio ball membership certifies the gradient ratio "
            f"({checked} member points, {violations} violations)")


def test_criterion_05_feasible_descent_100_traces_and_prox_oracle():
    violations = 0
    flagged = 0
    infeasible = 0
    for seed in range(100):
        f, g, gen = _random_pair(seed)
        prof = aim.SmoothnessProfile.from_pair(f, g, 0.1)
        alpha2 = 1.0 / prof.L_h
        y0 = np.abs(gen.standard_normal((4, 3))) * 2.0
        tr = aim.run_algorithm2(f, g, y0, alpha2 / 2.0, alpha2, alpha2 / 2.0, 300)
        infeasible += sum(0 if ok else 1 for ok in tr.feasible)
        for k in range(300):
            if tr.cert_prox_flags[k] and tr.sim_flags[k]:
                flagged += 1
                if tr.h_values[k + 1] > tr.h_values[k] + 1e-9:
                    violations += 1

    # one-turn equivalence with the grid-searched proximal objective
    oracle_worst = 0.0
    for s in range(3):
        gen = RngStream(s, 205).generator()
        f1 = aim.QuadraticObjective(aim.TransformSide.LEFT,
                                    np.array([[gen.uniform(0.3, 1.0)]]),
                                    np.array([[gen.uniform(-2.0, 2.0)]]))
        g1 = aim.QuadraticObjective(aim.TransformSide.LEFT,
                                    np.array([[gen.uniform(0.3, 1.0)]]),
                                    np.array([[gen.uniform(-2.0, 2.0)]]))
        y0 = np.array([[gen.uniform(0.0, 2.0)]])
        alpha1, alpha2, lam = 0.05, 0.1, 0.1
        tr = aim.run_algorithm2(f1, g1, y0, alpha1, alpha2, lam, 1)
        Delta, _ = aim.noise_delta(y0, f1, g1, alpha1, alpha2)
        gh = f1.grad(y0) + g1.grad(y0)
        v = float(y0[0, 0] - alpha2 * (gh - Delta)[0, 0])
        zgrid = np.arange(-10.0, 10.0, 1e-4)
        obj = np.where(zgrid >= 0.0, (zgrid - v) ** 2 / (2.0 * lam), np.inf)
        oracle_worst = max(oracle_worst,
                           abs(tr.iterates[1][0, 0] - zgrid[np.argmin(obj)]))
    _report(5, violations == 0 and flagged > 0 and infeasible == 0 and oracle_worst <= 2e-4,
            f"flagged feasible steps descend and one turn solves the proximal "
            f"objective ({flagged} flagged, {violations} violations, "
            f"grid gap {oracle_worst:.2e})")


def test_criterion_06_region_rasters():
    from enfold.harness import _planar_pair

    spec = ExperimentSpec.resolve(ExperimentKind.RASTER_S, 0)
    table = exp_raster_S(spec)
    grid = int(spec.params["grid"])
    f, g = _planar_pair(0)
    y_f, _, y_h = aim.optimal_points(f, g)
    xs = np.linspace(-3.0, 3.0, grid)

    def members(threshold):
        sel = [bool(r[3]) for r in table.rows if r[0] == threshold]
        return np.array(sel).reshape(grid, grid)

    low, high = members(0.7), members(1.5)
    border = lambda M: np.concatenate([M[0], M[-1], M[:, 0], M[:, -1]])
    ify, ifx = np.argmin(np.abs(xs - y_f[1, 0])), np.argmin(np.abs(xs - y_f[0, 0]))
    ihy, ihx = np.argmin(np.abs(xs - y_h[1, 0])), np.argmin(np.abs(xs - y_h[0, 0]))
    s_ok = (not border(low).any() and border(high).all()
            and low[ify, ifx] and not low[ihy, ihx] and not high[ihy, ihx]
            and bool(np.all(high[low])))

    t_spec = ExperimentSpec.resolve(ExperimentKind.RASTER_T, 0)
    t_table = exp_raster_T(t_spec)
    kappas = [float(k) for k in t_spec.params["kappas"]]
    fracs = []
    for kappa in kappas:
        rows = [r for r in t_table.rows if r[0] == kappa]
        keep = [bool(r[3]) for r in rows if not (r[1] == 0.0 and r[2] == 0.0)]
        fracs.append(np.mean(keep))
    t_ok = all(a <= b for a, b in zip(fracs, fracs[1:])) and fracs[-1] > 0.99
    _report(6, s_ok and t_ok,
            f"ball topology flips across threshold 1 and similarity coverage "
            f"grows to {fracs[-1]:.4f} at kappa {kappas[-1]}")


def test_criterion_07_trace_settles_into_inner_band():
    table = exp_aim_trace(ExperimentSpec.resolve(ExperimentKind.AIM_TRACE, 0))
    dist = table.column("dist_opt")
    head = dist[: max(1, len(dist) // 10)]
    tail = dist[-max(1, len(dist) // 4):]
    _report(7, float(tail.max()) < float(head.min()),
            f"late-trajectory band sits strictly inside the early band "
            f"(max late {tail.max():.4f} < min early {head.min():.4f})")


def test_criterion_08_deep_stack_energy_decreases():
    start = time.perf_counter()
    table = exp_energy_curves(ExperimentSpec.resolve(ExperimentKind.ENERGY_CURVES, 0))
    elapsed = time.perf_counter() - start
    means = table.column("mean")
    strict = all(b < a for a, b in zip(means, means[1:]))
    _report(8, strict and len(means) == 13 and elapsed < 120.0,
            f"12-layer mean energy strictly decreases over 200 samples "
            f"({elapsed:.1f}s)")


def test_criterion_09_trained_stack_keeps_descent():
    spec = ExperimentSpec.resolve(ExperimentKind.ENERGY_CURVES, 0,
                                  {"mode": "trained", "depth": 2, "d": 8, "n": 8})
    table = exp_energy_curves(spec)
    means = table.column("mean")
    diffs = np.diff(means)
    frac = float(np.mean(diffs <= 0.0))
    _report(9, frac >= 0.95,
            f"trained anchored stack keeps layerwise energy non-increasing "
            f"({frac:.0%} of transitions)")


def test_criterion_10_gradient_suite():
    worst_e1 = worst_e2 = 0.0
    for i in range(20):
        gen = RngStream(i, 206).generator()
        Y = gen.standard_normal((4, 3))
        cfg = EnergyConfig(rho=ALL_KINDS[i % 3],
                           bias=gen.standard_normal((4, 3)) if i % 2 else None)
        ga = grad_e1(Y, cfg)
        fd = finite_diff_grad(lambda M: e1(M, cfg), Y)
        worst_e1 = max(worst_e1, np.linalg.norm(ga - fd) / max(np.linalg.norm(ga), 1.0))
        W = gen.standard_normal((3, 3))
        gb = grad_e2(Y, W)
        fd2 = finite_diff_grad(lambda M: e2(M, W), Y)
        worst_e2 = max(worst_e2, np.linalg.norm(gb - fd2) / max(np.linalg.norm(gb), 1.0))

    def _stack(use_relu):
        w = LayerWeights.random(6, alpha2=0.5, scale=0.5, rng=RngStream(0, 207))
        return StackConfig(depth=2, weights=w, energy=EnergyConfig(), use_relu=use_relu)

    head = MetaHead(0.3 * RngStream(0, 208).generator().standard_normal((6, 1)))
    relu_report = grad_check(_stack(True), head, tol=1e-4, n=5, seed=0)
    smooth_report = grad_check(_stack(False), head, tol=1e-6, n=5, seed=0)
    _report(10, worst_e1 <= 1e-4 and worst_e2 <= 1e-4
            and relu_report.passed and smooth_report.passed,
            f"analytic gradients track finite differences "
            f"(energies {max(worst_e1, worst_e2):.2e}, stack {relu_report.max_rel_err:.2e}, "
            f"smooth stack {smooth_report.max_rel_err:.2e})")


def test_criterion_11_noise_bound_and_similarity_range():
    worst_slack = -np.inf
    draws = 0
    for seed in range(2000):
        f, g, gen = _random_pair(seed, t_scale=1.0)
        L_g, _ = aim.quadratic_constants(g)
        for _ in range(50):
            y = gen.standard_normal((4, 3)) * gen.uniform(0.1, 3.0)
            alpha2 = gen.uniform(0.05, 0.5)
            alpha1 = gen.uniform(0.0, alpha2)
            Delta, _ = aim.noise_delta(y, f, g, alpha1, alpha2)
            cap = (1.0 - alpha1 / alpha2 + alpha1 * L_g) * np.linalg.norm(f.grad(y))
            worst_slack = max(worst_slack, np.linalg.norm(Delta) - cap)
            draws += 1
    gen = RngStream(0, 209).generator()
    xi1 = gen.standard_normal((100_000, 6)) * gen.uniform(0.01, 10.0, (100_000, 1))
    xi2 = gen.standard_normal((100_000, 6)) * gen.uniform(0.0, 10.0, (100_000, 1))
    n1 = np.sum(xi1 * xi1, axis=1)
    dv = np.sum(np.minimum(xi2 * xi2 - xi1 * xi1, 0.0), axis=1) / n1
    in_range = bool(np.all(dv >= -1.0) and np.all(dv <= 0.0))
    _report(11, worst_slack <= 1e-10 and draws == 100_000 and in_range,
            f"noise bound holds over 1e5 draws (worst slack {worst_slack:.2e}) "
            f"and similarity stays in [-1, 0] over 1e5 draws")


def test_criterion_12_cli_runs_are_byte_identical(tmp_path):
    jobs = {
        "audit": {"seeds": 20, "depth": 3, "n": 6, "d": 6},
        "aim-trace": {"steps": 60},
        "raster-s": {"grid": 41},
        "raster-t": {"grid": 41},
        "energy-curves": {"samples": 8, "depth": 4, "n": 6, "d": 6},
        "grad-check": {"d": 4, "n": 4},
        "train": {"steps": 10, "dataset_size": 8, "d": 6, "n": 6},
    }
    mismatches = []
    for name, params in jobs.items():
        cfg = tmp_path / f"{name}.json"
        cfg.write_text(json.dumps({"version": 1, "seed": 7, "params": params}))
        digests = []
        for attempt in ("a", "b"):
            out = tmp_path / f"{name}-{attempt}"
            rc = cli_main([name, "--config", str(cfg), "--out", str(out), "--quiet"])
            assert rc == 0, name
            files = sorted(p.name for p in out.iterdir())
            digests.append({p: hashlib.sha256((out / p).read_bytes()).hexdigest()
                            for p in files})
        if digests[0] != digests[1]:
            mismatches.append(name)
    _report(12, not mismatches,
            f"all seven subcommands reproduce byte-identical artifacts "
            f"(mismatches: {mismatches or 'none'})")


def test_criterion_13_primary_stands_alone():
    code = (
        "import sys\n"
        "import enfold, enfold.numerics, enfold.energy, enfold.unfold, "
        "enfold.aim, enfold.grad, enfold.harness, enfold.cli\n"
        "bad = [m for m in sys.modules if 'figplot' in m or 'matplotlib' in m]\n"
        "sys.exit(1 if bad else 0)\n"
    )
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True)
    _report(13, proc.returncode == 0,
            "library and CLI import without any figure package present")
