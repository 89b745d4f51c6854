"""Command-line experiment drivers.

Each subcommand reads one JSON configuration, runs one experiment and
writes its artifacts (CSV series, JSON scalars, the resolved config) into
an output directory.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import initial
from .blowup import (BubbleVariant, InvariantViolation, SweepRow, UnderResolvedError,
                     bubble_initial_data, concentration_radius, eta_sweep, halving_decrement)
from .config import ConfigError, RunConfig, load_config
from .dynamics import EnergyReport, StepControl, StepError, default_tau, energy_audit, run
from .functionals import dissipation, liapunov
from .grid import build_grid, write_fields_csv
from .model import ModelParams, critical_mass, excluded_masses, regime
from .operators import SingularSystemError, SolverConvergenceError
from .steady import SteadyStateError, solve_steady

logger = logging.getLogger("chemosplit")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4
MASS_DRIFT_TOL = 1e-8
TRANSIENT_T = 1.0


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n")


def _prepare(cfg: RunConfig, out) -> Path:
    out = Path(out if out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg.to_dict())
    return out


def _mass_header(cfg: RunConfig) -> dict:
    p = cfg.params
    mc = critical_mass(p, radial=cfg.radial)
    excluded = excluded_masses(p)(p.M)
    info = {
        "mass": p.M,
        "critical_mass": mc,
        "critical_mass_general": critical_mass(p, radial=False),
        "critical_mass_radial": critical_mass(p, radial=True),
        "regime": regime(p, radial=cfg.radial),
        "excluded_multiple": excluded,
        "seed": cfg.seed,
    }
    # the radial-disk threshold carries no excluded multiples
    if excluded and not cfg.radial:
        msg = (f"M={p.M:.6g} is within 1e-6 of an integer multiple of 4*pi*(1+theta)*D; "
               "blowup is not asserted there on general domains")
        logger.warning(msg)
        info["warning"] = msg
    return info


def write_monitors(path: Path, reports) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EnergyReport.CSV_COLUMNS)
        for r in reports:
            writer.writerow([repr(float(x)) for x in r.csv_row()])


def build_initial_state(cfg: RunConfig, g):
    spec, p = cfg.initial, cfg.params
    if spec.kind == "homogeneous":
        return initial.homogeneous(p, g, spec.perturbation, cfg.seed)
    if spec.kind == "bubble":
        return initial.bubble(p, g, spec.eta, spec.variant or cfg.default_variant)
    if spec.kind == "file":
        return initial.from_file(spec.path, p, g)
    return initial.steady_perturbation(p, g, spec.amplitude, cfg.seed)


def _plot(path: Path, x, ys: dict, xlabel: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(len(ys), 1, figsize=(6, 2.4 * len(ys)), sharex=True, squeeze=False)
    for ax, (label, y) in zip(axes[:, 0], ys.items()):
        ax.plot(x, y, marker=".")
        ax.set_ylabel(label)
    axes[-1, 0].set_xlabel(xlabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _monotone_after(times, values, t0) -> Optional[bool]:
    vals = [v for t, v in zip(times, values) if t >= t0]
    if len(vals) < 2:
        return None
    return bool(np.all(np.diff(vals) >= 0))


def _nonincreasing(values) -> bool:
    # a bubble's first row uses its closed-form boundary flux and is skipped by the caller
    L = np.asarray(values)
    return bool(np.all(np.diff(L) <= 1e-6 * (1.0 + np.abs(L[1:]))))


def cmd_simulate(cfg: RunConfig, out=None, plot: bool = False) -> int:
    out = _prepare(cfg, out)
    p = cfg.params
    g = build_grid(cfg.domain, cfg.resolution)
    s0 = build_initial_state(cfg, g)
    tau = cfg.step.tau or default_tau(s0.w, g, cfg.step.max_drift_cfl)
    control = StepControl(tau, cfg.step.positivity_floor, cfg.step.max_drift_cfl)
    sentinel = None
    if cfg.sentinel_cells > 0:
        limit = cfg.sentinel_cells * g.h

        def sentinel(s):
            return concentration_radius(s.u, g) < limit

    result = run(s0, p, control, cfg.T, cfg.every, sentinel=sentinel)
    reports = result.reports
    write_monitors(out / "monitors.csv", reports)
    f = result.final
    write_fields_csv(out / "final_state.csv", g, u=f.u, v=f.v, w=f.w)

    cols = dict(zip(EnergyReport.CSV_COLUMNS, zip(*(r.csv_row() for r in reports))))
    masses = np.array(cols["mass"])
    drift = float(np.max(np.abs(masses - p.M)) / p.M)
    summary = _mass_header(cfg)
    summary.update({
        "label": result.label,
        "t_final": f.t,
        "steps": result.steps,
        "tau": tau,
        "max_mass_drift": drift,
        "sup_u_max": float(np.max(cols["sup_u"])),
        "sup_v_max": float(np.max(cols["sup_v"])),
        "sup_w_max": float(np.max(cols["sup_w"])),
        "sup_u_nondecreasing_after_transient": _monotone_after(cols["t"], cols["sup_u"], TRANSIENT_T),
        "L_nonincreasing": _nonincreasing(cols["L"][0 if s0.w_inflow is None else 1:]),
        "drift_cfl_violations": result.cfl_violations,
        "max_drift_cfl_ratio": result.max_cfl_ratio,
        "positivity_floor_activations": result.floor_activations,
        "monitors": {k: {"min": float(np.nanmin(v)) if not np.all(np.isnan(v)) else None,
                         "max": float(np.nanmax(v)) if not np.all(np.isnan(v)) else None}
                     for k, v in cols.items()},
    })
    if result.stopped_by_sentinel:
        summary["note"] = ("concentration radius fell below the grid sentinel; the run is "
                           "grid-limited and makes no claim about the continuum blowup time")
    failures = []
    if result.floor_activations == 0 and drift > MASS_DRIFT_TOL:
        failures.append(f"mass drift {drift:.3e} exceeds {MASS_DRIFT_TOL}")
    if min(f.u.min(), f.v.min(), f.w.min()) < 0:
        failures.append("negative entries in the final state")
    summary["invariant_failures"] = failures
    _write_json(out / "summary.json", summary)
    if plot:
        _plot(out / "monitors.svg", cols["t"],
              {"L": cols["L"], "sup_u": cols["sup_u"], "mass": cols["mass"]}, "t")
    if failures:
        logger.error("; ".join(failures))
        return EXIT_INVARIANT
    return EXIT_OK


def _steady_init(cfg: RunConfig, g):
    spec = cfg.steady
    if spec.init == "constant":
        return None
    variant = spec.variant or cfg.default_variant
    return bubble_initial_data(spec.eta, cfg.params, g, variant).state.w


def cmd_steady(cfg: RunConfig, out=None) -> int:
    out = _prepare(cfg, out)
    p = cfg.params
    g = build_grid(cfg.domain, cfg.resolution)
    spec = cfg.steady
    ss = solve_steady(p, g, _steady_init(cfg, g), spec.damping, spec.tol, spec.max_iter)
    write_fields_csv(out / "steady.csv", g, u=ss.u_star, v=ss.v_star, w=ss.w_star)
    state = ss.to_state()
    summary = _mass_header(cfg)
    summary.update(ss.summary())
    summary.update({
        "init": spec.init,
        "liapunov_quadrature": liapunov(state, p).L_total,
        "dissipation": dissipation(state, p),
    })
    _write_json(out / "summary.json", summary)
    if not ss.converged:
        logger.error("steady solve did not converge after %d iterations", ss.iterations)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_bubble_sweep(cfg: RunConfig, out=None, jobs: int = 1, plot: bool = False) -> int:
    out = _prepare(cfg, out)
    p = cfg.params
    g = build_grid(cfg.domain, cfg.resolution)
    variant = BubbleVariant(cfg.sweep.variant or cfg.default_variant)
    summary = _mass_header(cfg)
    summary["variant"] = variant.value
    try:
        result = eta_sweep(cfg.sweep.etas, p, g, variant, jobs=jobs)
    except InvariantViolation as exc:
        summary["invariant_failures"] = [str(exc)]
        _write_json(out / "summary.json", summary)
        raise
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SweepRow.COLUMNS)
        for row in result.rows:
            writer.writerow([repr(float(x)) for x in row.as_tuple()])
    dec = result.decrements()
    summary.update({
        "supercritical_for_variant": result.supercritical,
        "nu_shift": result.nu_shift,
        "edge_radius": result.edge_radius,
        "L": [r.L for r in result.rows],
        "decrements": dec.tolist(),
        "predicted_halving_decrement": halving_decrement(p, variant),
        "strictly_decreasing": bool(np.all(dec < 0)),
    })
    _write_json(out / "summary.json", summary)
    if plot:
        etas = np.array(cfg.sweep.etas)
        _plot(out / "sweep.svg", np.log(1 / etas), {"L": [r.L for r in result.rows],
                                                     "F": [r.F for r in result.rows]}, "ln(1/eta)")
    return EXIT_OK


def cmd_energy_audit(cfg: RunConfig, out=None) -> int:
    out = _prepare(cfg, out)
    p = cfg.params
    g = build_grid(cfg.domain, cfg.resolution)
    s0 = build_initial_state(cfg, g)
    a = cfg.audit
    audit = energy_audit(s0, p, a.tau, a.horizon, a.warmup, a.warmup_tau, cfg.step.max_drift_cfl)
    summary = _mass_header(cfg)
    summary.update(audit.to_dict())
    if audit.cfl_warning:
        summary["warning"] = "drift CFL ratio exceeded during the audit"
    _write_json(out / "audit.json", audit.to_dict())
    _write_json(out / "summary.json", summary)
    return EXIT_OK


def cmd_critical_mass(params: ModelParams) -> str:
    general = critical_mass(params, radial=False)
    radial = critical_mass(params, radial=True)
    lines = [
        f"general domain : 4*pi*(1+theta)*D = {general:.10g}",
        f"radial disk    : 8*pi*(1+theta)*D = {radial:.10g}",
        f"M = {params.M:.10g}: {regime(params, False)} (general), {regime(params, True)} (radial)",
    ]
    if excluded_masses(params)(params.M):
        lines.append("warning: M is an integer multiple of 4*pi*(1+theta)*D")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chemosplit", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "steady", "bubble-sweep", "energy-audit"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="JSON run configuration")
        cmd.add_argument("--out", help="output directory (overrides config 'output')")
        cmd.add_argument("--jobs", type=int, default=1, help="worker threads for sweep rows")
        cmd.add_argument("--plot", action="store_true", help="also write SVG plots")
    cm = sub.add_parser("critical-mass", help="print the critical masses for given parameters")
    cm.add_argument("--config")
    cm.add_argument("--D", type=float, default=1.0)
    cm.add_argument("--theta", type=float, default=1.0)
    cm.add_argument("--alpha", type=float, default=1.0)
    cm.add_argument("--M", type=float, default=1.0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "critical-mass":
            if args.config:
                params = load_config(args.config).params
            else:
                params = ModelParams(args.D, args.alpha, args.theta, args.M)
            print(cmd_critical_mass(params))
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.plot)
        if args.command == "steady":
            return cmd_steady(cfg, args.out)
        if args.command == "bubble-sweep":
            return cmd_bubble_sweep(cfg, args.out, args.jobs, args.plot)
        return cmd_energy_audit(cfg, args.out)
    except (ConfigError, UnderResolvedError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (StepError, SolverConvergenceError, SingularSystemError, SteadyStateError,
            ArithmeticError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
