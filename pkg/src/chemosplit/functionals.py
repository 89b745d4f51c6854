"""Liapunov functional, its dissipation, and the reduced free energy.

Every integral is the cell-midpoint quadrature of the grid and every
gradient norm is the face-based Dirichlet form used by the Neumann
Laplacian, so that discrete integration by parts holds exactly.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from .grid import Grid, integrate
from .model import ModelParams, entropy_L, entropy_L_theta
from .operators import dirichlet_energy, face_jumps, neumann_laplacian

logger = logging.getLogger(__name__)

DEGENERATE_FLOOR = 1e-30
CROSS_ENTROPY_CAP = 1e30

L_TERM_NAMES = ("entropy_u", "entropy_v", "interaction", "w_quadratic", "residual_square")


class NegativeDensityError(ValueError):
    """A density field has negative entries where the functional needs ``>= 0``."""


@dataclass
class EnergyReport:
    t: float
    mass: float
    L_total: float
    L_terms: Tuple[float, float, float, float, float]
    D_total: float = math.nan
    sup_u: float = math.nan
    sup_v: float = math.nan
    sup_w: float = math.nan
    grad_w_l2: float = math.nan
    splitting_defect: float = math.nan

    CSV_COLUMNS = ("t", "mass", "L", "D", "sup_u", "sup_v", "sup_w", "L2_gradw", "splitting_defect")

    def csv_row(self):
        return (self.t, self.mass, self.L_total, self.D_total, self.sup_u, self.sup_v,
                self.sup_w, self.grad_w_l2, self.splitting_defect)

    def to_dict(self):
        d = asdict(self)
        d["L_terms"] = dict(zip(L_TERM_NAMES, self.L_terms))
        return d


def _require_nonnegative(g: Grid, **fields):
    for name, f in fields.items():
        if np.any(f < 0):
            raise NegativeDensityError(f"{name} has negative entries (min {f.min():.3e})")


def elliptic_residual(v, w, p: ModelParams, g: Grid, w_inflow=None) -> np.ndarray:
    """``D lap w - alpha w + v``, the time derivative of ``w`` along solutions."""
    return p.D * neumann_laplacian(w, g, w_inflow) - p.alpha * w + v


def liapunov_terms(u, v, w, p: ModelParams, g: Grid, w_inflow=None) -> Tuple[float, ...]:
    u, v, w = g.check(u, "u"), g.check(v, "v"), g.check(w, "w")
    _require_nonnegative(g, u=u, v=v)
    res = elliptic_residual(v, w, p, g, w_inflow)
    return (
        integrate(entropy_L(u), g),
        integrate(entropy_L_theta(v, p.theta), g),
        -integrate((u + v) * w, g),
        0.5 * (1.0 + p.theta) * (p.D * dirichlet_energy(w, g) + p.alpha * integrate(w * w, g)),
        0.5 * integrate(res * res, g),
    )


def liapunov(state, p: ModelParams) -> EnergyReport:
    """Evaluate the Liapunov functional and its five terms at ``state``.

    ``D_total`` is left as NaN; :func:`energy_report` fills every field.
    """
    g = state.grid
    terms = liapunov_terms(state.u, state.v, state.w, p, g, state.w_inflow)
    return EnergyReport(
        t=state.t,
        mass=integrate(state.u + state.v, g),
        L_total=math.fsum(terms),
        L_terms=terms,
    )


def _cross_entropy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``(a - b)(ln a - ln b)`` with 0 for ``a = b = 0`` and a cap when one side is 0."""
    out = np.zeros_like(a)
    both = (a > 0) & (b > 0)
    out[both] = (a[both] - b[both]) * (np.log(a[both]) - np.log(b[both]))
    one = (a > 0) ^ (b > 0)
    if np.any(one):
        logger.warning("dissipation: %d cells with exactly one of theta*v, u zero; capping at %.0e",
                       int(one.sum()), CROSS_ENTROPY_CAP)
        out[one] = CROSS_ENTROPY_CAP
    return out


def dissipation_terms(u, v, w, p: ModelParams, g: Grid,
                      w_inflow=None) -> Tuple[float, float, float, float]:
    u, v, w = g.check(u, "u"), g.check(v, "v"), g.check(w, "w")
    _require_nonnegative(g, u=u, v=v)

    ul, ur = u[g.left], u[g.right]
    live = (ul > DEGENERATE_FLOOR) & (ur > DEGENERATE_FLOOR)
    ul, ur = ul[live], ur[live]
    harmonic = 2.0 * ul * ur / (ul + ur)
    phi_jump = (np.log(ur) - np.log(ul)) - (w[g.right] - w[g.left])[live]
    # face volume A*d times |jump/d|^2 = (A/d) jump^2
    drift = float(np.dot(g.transmissibility[live] * harmonic, phi_jump**2))

    exchange = integrate(_cross_entropy(p.theta * v, u), g)
    res = elliptic_residual(v, w, p, g, w_inflow)
    return (
        drift,
        exchange,
        p.D * dirichlet_energy(res, g),
        (1.0 + p.theta + p.alpha) * integrate(res * res, g),
    )


def dissipation(state, p: ModelParams) -> float:
    """Nonnegative dissipation rate of the Liapunov functional.

    The drift term uses the harmonic mean of ``u`` on each face times the
    squared jump of ``ln u - w``; faces with ``u <= 1e-30`` on either side
    are skipped.
    """
    total = math.fsum(dissipation_terms(state.u, state.v, state.w, p, state.grid,
                                        state.w_inflow))
    assert total >= 0.0, f"negative dissipation {total}"
    return total


def energy_report(state, p: ModelParams) -> EnergyReport:
    """Full monitor record: Liapunov terms, dissipation, mass and sup norms."""
    report = liapunov(state, p)
    report.D_total = dissipation(state, p)
    report.sup_u = float(np.max(state.u))
    report.sup_v = float(np.max(state.v))
    report.sup_w = float(np.max(state.w))
    report.grad_w_l2 = math.sqrt(dirichlet_energy(state.w, state.grid))
    return report


def log_exp_norm(W, g: Grid) -> float:
    """``ln ||e^W||_1`` evaluated without overflow."""
    return float(logsumexp(g.check(W), b=g.volumes))


def free_energy_F(W, p: ModelParams, g: Grid) -> float:
    """Reduced free energy of a (nominally zero-mean) potential ``W``.

    ``(1+theta)|Omega|/(2M) (D ||grad W||^2 + alpha ||W||^2) - |Omega| ln(||e^W||_1 / |Omega|)``
    """
    W = g.check(W, "W")
    area = float(g.volumes.sum())
    mean = integrate(W, g) / area
    scale = max(1.0, float(np.max(np.abs(W), initial=0.0)))
    if abs(mean) > 1e-8 * scale:
        warnings.warn(f"free_energy_F called with non-zero-mean W (mean {mean:.3e})", stacklevel=2)
    quad = p.D * dirichlet_energy(W, g) + p.alpha * integrate(W * W, g)
    return (1.0 + p.theta) * area / (2.0 * p.M) * quad - area * (log_exp_norm(W, g) - math.log(area))
