"""Acceptance criteria A1-A8, each at its stated tolerance.

Every test appends one ``A<k> PASS|FAIL: ...`` line, which the session
summary prints (see conftest.py), and then asserts.
"""
import json
import math
import time

import numpy as np
import pytest

from chemosplit import cli, initial
from chemosplit.blowup import BubbleVariant, bubble_profile, eta_sweep, halving_decrement
from chemosplit.dynamics import StepControl, energy_audit, run
from chemosplit.functionals import dissipation, liapunov
from chemosplit.grid import build_radial_grid, build_rect_grid, integrate, norms
from chemosplit.model import ModelParams
from chemosplit.operators import (HelmholtzProblem, chemotactic_divergence, helmholtz_solve)
from chemosplit.steady import solve_steady
from test_cli import read_csv
from test_functionals import HOMOGENEOUS_ENERGY
from test_operators import operator_scale

pytestmark = pytest.mark.acceptance


def record(log, tag, checks, detail, elapsed):
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    line = f"{tag} {'PASS' if ok else 'FAIL'}: {detail} [{elapsed:.1f}s]"
    if failed:
        line += " failed: " + ", ".join(failed)
    log.append(line)
    print(line)
    assert ok, line


# ---- A1 / A2 ----------------------------------------------------------------------------

A12_PARAMS = ModelParams(D=1.0, alpha=1.0, theta=1.0, M=4 * math.pi)
A12_TAU, A12_EVERY = 0.01, 10


@pytest.fixture(scope="module")
def perturbed_run():
    g = build_radial_grid(1.0, 256)
    s0 = initial.homogeneous(A12_PARAMS, g, perturbation=0.1, seed=0)
    start = time.perf_counter()
    result = run(s0, A12_PARAMS, StepControl(A12_TAU), 50.0, every=A12_EVERY)
    return s0, result, time.perf_counter() - start


def test_A1_mass_conservation(perturbed_run, acceptance_log):
    _, result, elapsed = perturbed_run
    M = A12_PARAMS.M
    drift = max(abs(r.mass - M) / M for r in result.reports)
    record(acceptance_log, "A1", {"mass": drift <= 1e-8, "runtime": elapsed < 10},
           f"max |mass-M|/M = {drift:.2e} over {len(result.reports)} rows (tol 1e-8)", elapsed)


def test_A2_energy_decay(perturbed_run, acceptance_log):
    s0, result, elapsed = perturbed_run
    L = np.array([r.L_total for r in result.reports])
    t = np.array([r.t for r in result.reports])
    steps = np.round(np.diff(t) / A12_TAU)
    excess = np.diff(L) - steps * 1e-6 * (1 + np.abs(L[1:]))
    start = time.perf_counter()
    audit = energy_audit(s0, A12_PARAMS, tau=0.02, horizon=0.2, warmup=1.0)
    elapsed += time.perf_counter() - start
    record(acceptance_log, "A2",
           {"monotone": np.all(excess <= 0), "richardson": 1.5 <= audit.ratio <= 2.5,
            "runtime": elapsed < 30},
           f"max dL between monitors = {np.max(np.diff(L)):.2e}; Richardson ratio "
           f"{audit.ratio:.3f} (defects {audit.defect_coarse:.2e}, {audit.defect_fine:.2e})",
           elapsed)


# ---- A3 ----------------------------------------------------------------------------------

def write_config(path, payload):
    path.write_text(json.dumps(payload, indent=2))
    return str(path)


def test_A3_subcritical_boundedness(tmp_path, acceptance_log):
    base = {"params": {"D": 1.0, "alpha": 1.0, "theta": 1.0, "M": 0.5 * 16 * math.pi},
            "domain": {"type": "disk", "R": 1.0}, "resolution": [256]}
    sim = write_config(tmp_path / "sim.json", dict(
        base, initial={"type": "bubble", "eta": 0.2, "variant": "disk_center"},
        T=200.0, every=10, step={"tau": 0.01}))
    steady = write_config(tmp_path / "steady.json", dict(base, steady={"init": "constant"}))
    start = time.perf_counter()
    code_sim = cli.main(["simulate", "--config", sim, "--out", str(tmp_path / "sim")])
    code_steady = cli.main(["steady", "--config", steady, "--out", str(tmp_path / "steady")])
    elapsed = time.perf_counter() - start

    mon = read_csv(tmp_path / "sim" / "monitors.csv")
    early = mon["sup_u"][mon["t"] <= 100.0].max()
    late = mon["sup_u"][mon["t"] >= 100.0].max()
    final = read_csv(tmp_path / "sim" / "final_state.csv")
    ref = read_csv(tmp_path / "steady" / "steady.csv")
    g = build_radial_grid(1.0, 256)
    diff = np.concatenate([final[k] - ref[k] for k in "uvw"])
    size = np.concatenate([ref[k] for k in "uvw"])
    vol = np.tile(g.volumes, 3)
    rel = math.sqrt(np.dot(diff**2, vol) / np.dot(size**2, vol))
    record(acceptance_log, "A3",
           {"exit codes": code_sim == 0 and code_steady == 0, "bounded": late <= 1.1 * early,
            "stabilized": rel <= 5e-2, "runtime": elapsed < 120},
           f"max sup_u [0,100] = {early:.3f}, [100,200] = {late:.3f}; rel L2 to steady {rel:.2e}",
           elapsed)


# ---- A4 ----------------------------------------------------------------------------------

def test_A4_supercritical_growth(tmp_path, acceptance_log):
    cfg = write_config(tmp_path / "a4.json", {
        "params": {"D": 1.0, "alpha": 1.0, "theta": 1.0, "M": 2 * 16 * math.pi},
        "domain": {"type": "disk", "R": 1.0}, "resolution": [1024],
        "initial": {"type": "bubble", "eta": 0.1, "variant": "disk_center"},
        "T": 50.0, "every": 50, "step": {"tau": 2e-4}, "sentinel_cells": 4})
    out = tmp_path / "a4"
    start = time.perf_counter()
    code = cli.main(["simulate", "--config", cfg, "--out", str(out)])
    elapsed = time.perf_counter() - start
    mon = read_csv(out / "monitors.csv")
    summary = json.loads((out / "summary.json").read_text())
    t, sup = mon["t"], mon["sup_u"]
    after = t >= 1.0 - 1e-9
    at_one = sup[np.argmin(np.abs(t - 1.0))]
    growth = sup[-1] / at_one
    record(acceptance_log, "A4",
           {"exit code": code == 0, "row at t=1": np.min(np.abs(t - 1.0)) < 1e-9,
            "nondecreasing": bool(np.all(np.diff(sup[after]) >= 0)), "growth": growth >= 3,
            "label": summary["label"] == "grid-limited", "runtime": elapsed < 300},
           f"sentinel at t={t[-1]:.3f}; sup_u(t=1) = {at_one:.4g}, at sentinel {sup[-1]:.4g} "
           f"(x{growth:.1f}); label {summary['label']!r}", elapsed)


# ---- A5 ----------------------------------------------------------------------------------

def test_A5_bubble_energy_divergence(acceptance_log):
    p = ModelParams(D=1.0, alpha=1.0, theta=1.0, M=2 * 16 * math.pi)
    start = time.perf_counter()
    g = build_radial_grid(1.0, 4096)
    res = eta_sweep([0.4, 0.2, 0.1, 0.05], p, g, BubbleVariant.DISK_CENTER)
    elapsed = time.perf_counter() - start
    dec = res.decrements()
    predicted = halving_decrement(p, BubbleVariant.DISK_CENTER)
    rel = abs(dec[-1] - predicted) / abs(predicted)
    record(acceptance_log, "A5",
           {"decreasing": bool(np.all(dec < 0)), "slope": rel <= 0.3, "runtime": elapsed < 60},
           f"decrements {', '.join(f'{d:.2f}' for d in dec)}; predicted {predicted:.2f} "
           f"(last off by {rel:.1%})", elapsed)


# ---- A6 ----------------------------------------------------------------------------------

def test_A6_quadrature_oracle(acceptance_log):
    start = time.perf_counter()
    checks, parts = {}, []
    for eta in (0.5, 0.25):
        exact = math.pi / (eta**2 + math.pi)
        errs = {}
        for n in (2048, 4096):
            g = build_radial_grid(1.0, n)
            xi, _ = bubble_profile(eta, (0.0, 0.0), g)
            errs[n] = abs(integrate(np.exp(xi), g) - exact) / exact
        order = math.log2(errs[2048] / errs[4096])
        checks[f"tol eta={eta}"] = errs[4096] <= 1e-4
        checks[f"order eta={eta}"] = order >= 1.9
        parts.append(f"eta={eta}: rel err {errs[4096]:.2e}, order {order:.2f}")
    elapsed = time.perf_counter() - start
    checks["runtime"] = elapsed < 5
    record(acceptance_log, "A6", checks, "; ".join(parts), elapsed)


# ---- A7 ----------------------------------------------------------------------------------

def test_A7_steady_suite(acceptance_log):
    start = time.perf_counter()
    checks, parts = {}, []

    for p, g in ((ModelParams(D=1.0, alpha=1.0, theta=1.0, M=1.0), build_radial_grid(1.0, 256)),
                 (ModelParams(D=0.5, alpha=2.0, theta=3.0, M=20.0), build_rect_grid(2.0, 1.0, 32, 16))):
        ss = solve_steady(p, g, tol=1e-12)
        expected = p.M / (p.alpha * (p.theta + 1) * g.domain.area())
        err = np.max(np.abs(ss.w_star - expected)) / expected
        checks[f"constant w* ({'disk' if g.radial else 'rect'})"] = ss.converged and err <= 1e-10
        checks[f"D <= 1e-8 ({'disk' if g.radial else 'rect'})"] = dissipation(ss.to_state(), p) <= 1e-8
        parts.append(f"w* rel err {err:.1e}")

    # closed form vs quadrature under refinement, on a non-constant stationary state
    p = ModelParams(D=0.05, alpha=1.0, theta=1.0, M=3.0)
    gaps = []
    for n in (16, 32, 64):
        g = build_rect_grid(1.0, 1.0, n, n)
        w0 = 0.5 * np.cos(math.pi * g.coords[0]) * np.cos(math.pi * g.coords[1])
        ss = solve_steady(p, g, w_init=w0, tol=1e-10)
        state = ss.to_state()
        L = liapunov(state, p).L_total
        gaps.append((abs(L - ss.energy_closed_form), 1e-9 * (1 + abs(L))))
        checks[f"D <= 1e-8 (n={n})"] = ss.converged and dissipation(state, p) <= 1e-8
    shrink = all(g2 <= g1 / 4 or g2 <= floor for (g1, _), (g2, floor) in zip(gaps, gaps[1:]))
    checks["gap shrinks x4 or at round-off"] = shrink
    parts.append("gaps " + ", ".join(f"{g:.1e}" for g, _ in gaps))

    g = build_radial_grid(1.0, 1024)
    unit = ModelParams(D=1.0, alpha=1.0, theta=1.0, M=1.0)
    energy = solve_steady(unit, g).energy_closed_form
    checks["homogeneous energy"] = abs(energy - 3.3657) <= 1e-3
    checks["scalar oracle"] = abs(energy - HOMOGENEOUS_ENERGY) <= 1e-3
    parts.append(f"homogeneous energy {energy:.6f}")
    elapsed = time.perf_counter() - start
    checks["runtime"] = elapsed < 10
    record(acceptance_log, "A7", checks, "; ".join(parts), elapsed)


# ---- A8 ----------------------------------------------------------------------------------

def test_A8_operator_identities(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checks = {}
    worst_eq, worst_sum = 0.0, 0.0
    for g in (build_radial_grid(1.0, 64), build_rect_grid(2.0, 1.0, 24, 12)):
        for _ in range(20):
            w = 3 * rng.random(g.size)
            u = 0.5 * np.exp(w)
            eq = np.max(np.abs(chemotactic_divergence(u, w, g))) / (u.max() * operator_scale(g))
            worst_eq = max(worst_eq, eq)
            v = rng.random(g.size)
            div = chemotactic_divergence(v, w, g)
            worst_sum = max(worst_sum, abs(integrate(div, g)) / norms(div, g)[0])
    checks["SG equilibrium"] = worst_eq <= 1e-12
    checks["conservation"] = worst_sum <= 1e-13
    errs = []
    for n in (16, 32, 64):
        g = build_rect_grid(1.0, 1.0, n, n)
        f = np.cos(math.pi * g.coords[0])
        sol = helmholtz_solve(HelmholtzProblem(1.0, 1.0, g), f)
        errs.append(np.max(np.abs(sol - f / (1 + math.pi**2))))
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    checks["Helmholtz O(h^2)"] = all(3.6 <= r <= 4.4 for r in ratios)
    elapsed = time.perf_counter() - start
    checks["runtime"] = elapsed < 5
    record(acceptance_log, "A8", checks,
           f"SG equilibrium {worst_eq:.1e} (relative to operator scale), conservation "
           f"{worst_sum:.1e}, Helmholtz error ratios {', '.join(f'{r:.2f}' for r in ratios)}",
           elapsed)
