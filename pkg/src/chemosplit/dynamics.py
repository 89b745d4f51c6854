"""Linearly implicit time stepping for the moving/static/chemoattractant system.

One step updates ``w``, then ``u``, then ``v``:

1. ``(1 + tau alpha) w' - tau D lap w' = w + tau v``
2. ``(1 + tau_x) u' - tau SG(u'; w') = u + tau_x theta v``
3. ``v' = v e^{-theta tau} + (u'/theta)(1 - e^{-theta tau})``

with ``tau_x = (1 - e^{-theta tau}) / theta``.  Step 3 is the exact solution
of ``v_t = u' - theta v`` over the step; using the same effective exchange
time ``tau_x`` in step 2 makes the u <-> v exchange cancel identically, so
the discrete mass of ``u + v`` is conserved to round-off.  Both linear
systems are M-matrices, which keeps all three fields nonnegative for any
``tau``.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional

import numpy as np

from .functionals import EnergyReport, dissipation, energy_report, liapunov
from .grid import Grid, integrate
from .model import ModelParams
from .operators import HelmholtzProblem, drift_diffusion_solve, face_jumps, helmholtz_solve

logger = logging.getLogger(__name__)


class DriftCFLWarning(RuntimeWarning):
    pass


class StepError(RuntimeError):
    """A time step failed; ``t`` is the time at the start of the failing step."""

    def __init__(self, message, t):
        super().__init__(f"{message} (at t={t:.6g})")
        self.t = t


@dataclass
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    w: np.ndarray
    grid: Grid
    # boundary normal flux of a closed-form w that violates no-flux; None after any step
    w_inflow: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("u", "v", "w"):
            setattr(self, name, self.grid.check(getattr(self, name), name))

    @property
    def mass(self) -> float:
        return integrate(self.u + self.v, self.grid)

    def copy(self) -> "State":
        return State(self.t, self.u.copy(), self.v.copy(), self.w.copy(), self.grid,
                     None if self.w_inflow is None else self.w_inflow.copy())

    def midpoint(self, other: "State") -> "State":
        inflow = None
        if self.w_inflow is not None or other.w_inflow is not None:
            zero = np.zeros(self.grid.size)
            a = zero if self.w_inflow is None else self.w_inflow
            b = zero if other.w_inflow is None else other.w_inflow
            inflow = 0.5 * (a + b)
        return State(0.5 * (self.t + other.t), 0.5 * (self.u + other.u), 0.5 * (self.v + other.v),
                     0.5 * (self.w + other.w), self.grid, inflow)


@dataclass(frozen=True)
class StepControl:
    tau: float
    positivity_floor: float = 0.0
    max_drift_cfl: float = 0.4

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if self.positivity_floor < 0:
            raise ValueError("positivity_floor must be >= 0")


def homogeneous_state(p: ModelParams, g: Grid, t: float = 0.0) -> State:
    """The spatially constant steady state of mass ``M``."""
    u_bar = p.theta * p.M / ((1.0 + p.theta) * g.volumes.sum())
    ones = np.ones(g.size)
    return State(t, u_bar * ones, u_bar / p.theta * ones, u_bar / (p.theta * p.alpha) * ones, g)


def drift_cfl_ratio(w: np.ndarray, g: Grid, tau: float) -> float:
    """``tau * max|w jump| / h^2``; compared against ``max_drift_cfl``."""
    jumps = np.abs(face_jumps(w, g)) / g.face_dist**2
    return tau * float(jumps.max(initial=0.0))


def default_tau(w: np.ndarray, g: Grid, max_drift_cfl: float = 0.4) -> float:
    jump = float(np.abs(face_jumps(w, g)).max(initial=0.0))
    return min(0.1, max_drift_cfl * g.h**2 / (1.0 + jump))


def _advance(s: State, p: ModelParams, c: StepControl):
    g, tau = s.grid, c.tau
    cfl = drift_cfl_ratio(s.w, g, tau)
    decay = math.exp(-p.theta * tau)
    tau_x = -math.expm1(-p.theta * tau) / p.theta

    w_new = helmholtz_solve(HelmholtzProblem(1.0 + tau * p.alpha, tau * p.D, g), s.w + tau * s.v)
    u_new = drift_diffusion_solve(1.0 + tau_x, tau, w_new, s.u + tau_x * p.theta * s.v, g)
    v_new = s.v * decay + u_new * tau_x

    floored = 0
    if c.positivity_floor > 0:
        for arr in (u_new, v_new, w_new):
            low = arr < c.positivity_floor
            floored += int(low.sum())
            arr[low] = c.positivity_floor
        if floored:
            logger.warning("positivity floor %.3e activated on %d entries at t=%.6g; mass is no "
                           "longer conserved", c.positivity_floor, floored, s.t + tau)
    if not (np.all(np.isfinite(u_new)) and np.all(np.isfinite(w_new))):
        raise StepError("non-finite values after linear solves", s.t)
    return State(s.t + tau, u_new, v_new, w_new, g), cfl, floored


def step(s: State, p: ModelParams, c: StepControl) -> State:
    """Advance one step; warns with :class:`DriftCFLWarning` on a drift-CFL violation."""
    new, cfl, _ = _advance(s, p, c)
    if cfl > c.max_drift_cfl:
        warnings.warn(f"drift CFL ratio {cfl:.3g} exceeds {c.max_drift_cfl}", DriftCFLWarning,
                      stacklevel=2)
    return new


@dataclass
class RunResult:
    reports: List[EnergyReport]
    final: State
    steps: int
    cfl_violations: int = 0
    max_cfl_ratio: float = 0.0
    floor_activations: int = 0
    stopped_by_sentinel: bool = False

    @property
    def label(self) -> str:
        return "grid-limited" if self.stopped_by_sentinel else "completed"


def energy_defect(before: State, after: State, p: ModelParams) -> float:
    """``(L(after) - L(before)) / tau + D(midpoint)`` for one step."""
    tau = after.t - before.t
    dL = liapunov(after, p).L_total - liapunov(before, p).L_total
    return dL / tau + dissipation(before.midpoint(after), p)


@dataclass
class AuditResult:
    tau: float
    defect_coarse: float
    defect_fine: float
    steps_coarse: int
    cfl_warning: bool
    warmup: float

    @property
    def ratio(self) -> float:
        if self.defect_fine == 0.0:
            return math.nan
        return self.defect_coarse / self.defect_fine

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "tau_fine": self.tau / 2,
            "defect_coarse": self.defect_coarse,
            "defect_fine": self.defect_fine,
            "richardson_ratio": None if math.isnan(self.ratio) else self.ratio,
            "steps_coarse": self.steps_coarse,
            "cfl_warning": self.cfl_warning,
            "warmup": self.warmup,
        }


def _max_defect(s: State, p: ModelParams, c: StepControl, n_steps: int):
    worst, cfl_hit = 0.0, False
    for _ in range(n_steps):
        new, cfl, _ = _advance(s, p, c)
        cfl_hit |= cfl > c.max_drift_cfl
        worst = max(worst, abs(energy_defect(s, new, p)))
        s = new
    return worst, cfl_hit


def energy_audit(s0: State, p: ModelParams, tau: float, horizon: float, warmup: float = 0.0,
                 warmup_tau: Optional[float] = None, max_drift_cfl: float = 0.4) -> AuditResult:
    """Measure the discrete energy defect at ``tau`` and ``tau/2``.

    The defect of one step is ``|(L_{n+1} - L_n)/tau + D(midpoint)|``; the
    audit reports its maximum over ``horizon``.  For a first-order scheme
    the ratio coarse/fine is close to 2.  A ``warmup`` run (step
    ``warmup_tau``, default ``tau/4``) first damps the stiff initial layer,
    whose fast modes would otherwise dominate both defects.
    """
    if warmup > 0:
        s0 = run(s0, p, StepControl(warmup_tau or tau / 4, max_drift_cfl=max_drift_cfl),
                 warmup, every=10**9).final
        s0 = State(0.0, s0.u, s0.v, s0.w, s0.grid)
    n = max(1, round(horizon / tau))
    coarse, hit1 = _max_defect(s0, p, StepControl(tau, max_drift_cfl=max_drift_cfl), n)
    fine, hit2 = _max_defect(s0, p, StepControl(tau / 2, max_drift_cfl=max_drift_cfl), 2 * n)
    if hit1 or hit2:
        logger.warning("energy audit: drift CFL ratio exceeded at tau=%.3g", tau)
    return AuditResult(tau, coarse, fine, n, hit1 or hit2, warmup)


def run(s0: State, p: ModelParams, c: StepControl, T: float, every: int = 1,
        sentinel: Optional[Callable[[State], bool]] = None) -> RunResult:
    """Integrate to time ``T`` and record an :class:`EnergyReport` every ``every`` steps.

    ``sentinel`` is checked at each monitor row; when it returns true the
    run stops early and is labelled ``grid-limited``.  The last step is
    shortened to land exactly on ``T``.
    """
    if not T > 0:
        raise ValueError("horizon T must be positive")
    if every < 1:
        raise ValueError("monitor stride must be >= 1")
    state = s0
    result = RunResult(reports=[energy_report(state, p)], final=state, steps=0)
    n_steps = max(1, math.ceil(T / c.tau - 1e-9))
    for k in range(1, n_steps + 1):
        ctrl = c if k < n_steps else replace(c, tau=T - state.t)
        prev = state
        try:
            state, cfl, floored = _advance(state, p, ctrl)
        except StepError:
            raise
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            raise StepError(str(exc), prev.t) from exc
        result.max_cfl_ratio = max(result.max_cfl_ratio, cfl)
        if cfl > c.max_drift_cfl:
            result.cfl_violations += 1
        result.floor_activations += floored
        if k % every == 0 or k == n_steps:
            report = energy_report(state, p)
            report.splitting_defect = energy_defect(prev, state, p)
            result.reports.append(report)
            if sentinel is not None and sentinel(state):
                result.stopped_by_sentinel = True
                result.steps = k
                break
        result.steps = k
    if result.cfl_violations:
        logger.warning("drift CFL ratio exceeded %s on %d of %d steps (max %.3g); the u-update is "
                       "implicit so this affects accuracy, not positivity",
                       c.max_drift_cfl, result.cfl_violations, result.steps, result.max_cfl_ratio)
    result.final = state
    return result
