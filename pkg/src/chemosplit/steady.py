"""Stationary states of fixed total mass.

A stationary triple has ``u* = theta v*`` and ``u*`` proportional to
``e^{w*}``, which reduces the problem to the nonlocal elliptic equation

    -D lap w + alpha w = (M/(theta+1)) e^w / ||e^w||_1

solved here by damped Picard iteration, one Helmholtz solve per sweep.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import State
from .functionals import log_exp_norm
from .grid import Grid, integrate, norms
from .model import ModelParams
from .operators import HelmholtzProblem, dirichlet_energy, helmholtz_solve, neumann_laplacian

logger = logging.getLogger(__name__)

EXP_OVERFLOW_GUARD = 700.0


class SteadyStateError(ArithmeticError):
    pass


@dataclass
class SteadyState:
    w_star: np.ndarray
    u_star: np.ndarray
    v_star: np.ndarray
    residual: float
    iterations: int
    converged: bool
    energy_closed_form: float
    grid: Grid

    def to_state(self, t: float = 0.0) -> State:
        return State(t, self.u_star.copy(), self.v_star.copy(), self.w_star.copy(), self.grid)

    def summary(self) -> dict:
        return {
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "energy_closed_form": self.energy_closed_form,
            "w_min": float(self.w_star.min()),
            "w_max": float(self.w_star.max()),
        }


def boltzmann_profile(w: np.ndarray, g: Grid) -> np.ndarray:
    """``e^w / ||e^w||_1`` computed with a max shift."""
    shifted = np.exp(w - w.max())
    return shifted / integrate(shifted, g)


def assemble(w: np.ndarray, p: ModelParams, g: Grid):
    """``(u*, v*)`` from ``w*``; ``u* = theta v*`` exactly."""
    v = p.M / (p.theta + 1.0) * boltzmann_profile(w, g)
    return p.theta * v, v


def picard_map(w: np.ndarray, p: ModelParams, g: Grid) -> np.ndarray:
    """One undamped sweep: solve ``-D lap w_hat + alpha w_hat = (M/(theta+1)) e^w/||e^w||``."""
    if w.max() > EXP_OVERFLOW_GUARD:
        raise SteadyStateError(
            f"max w = {w.max():.1f} exceeds {EXP_OVERFLOW_GUARD}; the iteration is diverging "
            "(try stronger damping or a different initializer)"
        )
    rhs = p.M / (p.theta + 1.0) * boltzmann_profile(w, g)
    return helmholtz_solve(HelmholtzProblem(p.alpha, p.D, g), rhs)


def steady_residual(w: np.ndarray, p: ModelParams, g: Grid) -> float:
    """Discrete L2 norm of ``-D lap w + alpha w - v*``."""
    _, v = assemble(w, p, g)
    r = -p.D * neumann_laplacian(w, g) + p.alpha * w - v
    return norms(r, g)[1]


def steady_energy_closed_form(ss: SteadyState, p: ModelParams, g: Grid) -> float:
    """Liapunov value on a stationary state written through ``w*`` alone."""
    return _closed_form(ss.w_star, p, g)


def _closed_form(w: np.ndarray, p: ModelParams, g: Grid) -> float:
    area = float(g.volumes.sum())
    M, th = p.M, p.theta
    return (
        M * math.log(th * M / (th + 1.0))
        - M * log_exp_norm(w, g)
        - M
        + area * (1.0 + 1.0 / th)
        + 0.5 * (1.0 + th) * (p.D * dirichlet_energy(w, g) + p.alpha * integrate(w * w, g))
    )


def solve_steady(p: ModelParams, g: Grid, w_init=None, damping: float = 0.5,
                 tol: float = 1e-10, max_iter: int = 10_000) -> SteadyState:
    """Damped fixed-point iteration for the stationary chemoattractant.

    Stops when the sup-norm update falls below ``tol`` and the equation
    residual is below ``tol * (1 + ||v*||_2)``.  A run that hits
    ``max_iter`` returns its last iterate with ``converged=False`` and a
    warning in the log; it is never reported as converged.
    """
    if not 0 < damping <= 1:
        raise ValueError(f"damping must lie in (0, 1], got {damping!r}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol!r}")
    w = np.zeros(g.size) if w_init is None else g.check(w_init, "w_init").copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        w_next = (1.0 - damping) * w + damping * picard_map(w, p, g)
        change = float(np.max(np.abs(w_next - w)))
        w = w_next
        if change <= tol:
            _, v = assemble(w, p, g)
            if steady_residual(w, p, g) <= tol * (1.0 + norms(v, g)[1]):
                converged = True
                break
    if not converged:
        logger.warning("steady solve did not converge in %d iterations (last update %.3e)",
                       max_iter, change)
    u, v = assemble(w, p, g)
    return SteadyState(
        w_star=w, u_star=u, v_star=v,
        residual=steady_residual(w, p, g),
        iterations=it,
        converged=converged,
        energy_closed_form=_closed_form(w, p, g),
        grid=g,
    )
