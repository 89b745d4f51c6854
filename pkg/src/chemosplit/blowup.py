"""Concentrating bubble initial data and energy sweeps along the bubble scale.

The profile ``xi_eta(x) = 2 ln(eta / (eta^2 + pi |x|^2))`` solves
``-lap xi = 8 pi e^xi`` in the plane.  Centered in a disk it carries all of
its unit mass inside the domain; centered on a flat boundary edge it
carries half.  Feeding it into (u, v, w) with the right split of mass makes
the Liapunov functional diverge to minus infinity as ``eta -> 0`` whenever
the mass is supercritical for that geometry.
"""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .dynamics import State
from .functionals import free_energy_F, liapunov
from .grid import Grid, integrate
from .model import ModelParams, RadialDisk, Rectangle, critical_mass

logger = logging.getLogger(__name__)

MASS_RTOL = 1e-10
CELLS_PER_ETA = 8


class BubbleVariant(str, enum.Enum):
    DISK_CENTER = "disk_center"
    FLAT_BOUNDARY = "flat_boundary"


class InvariantViolation(AssertionError):
    """A property guaranteed by construction failed on the grid."""


class UnderResolvedError(ValueError):
    def __init__(self, message, required_n):
        super().__init__(message)
        self.required_n = required_n


@dataclass
class BubbleData:
    eta: float
    variant: BubbleVariant
    nu_shift: float
    U_eta: float
    V_eta: float
    state: State
    edge_radius: Optional[float] = None


def bubble_center(g: Grid, variant: BubbleVariant) -> Tuple[float, float]:
    variant = BubbleVariant(variant)
    if variant is BubbleVariant.DISK_CENTER:
        if not g.radial:
            raise ValueError("disk_center bubbles need a radial disk grid")
        return (0.0, 0.0)
    if g.radial:
        raise ValueError("flat_boundary bubbles need a rectangular grid")
    return (0.5 * g.domain.Lx, 0.0)


def bubble_formula(eta: float, dist) -> np.ndarray:
    return 2.0 * np.log(eta / (eta**2 + math.pi * np.asarray(dist) ** 2))


def bubble_profile(eta: float, center, g: Grid):
    """Return ``(xi, Xi)`` at cell centers; ``Xi`` is ``xi`` minus its discrete mean."""
    if not 0 < eta < 1:
        raise ValueError(f"eta must lie in (0, 1), got {eta!r}")
    xi = bubble_formula(eta, g.distance_from(center))
    return xi, xi - integrate(xi, g) / g.volumes.sum()


def bubble_boundary_flux(eta: float, center, g: Grid) -> np.ndarray:
    """Per-cell integral of the outward normal derivative of ``xi_eta`` over boundary faces.

    Midpoint rule on each boundary face, using the closed-form gradient
    ``-4 pi (x - c) / (eta^2 + pi |x - c|^2)``.
    """
    out = np.zeros(g.size)
    if g.radial:
        R = g.domain.R
        out[-1] = g.edge_areas[-1] * (-4.0 * math.pi * R / (eta**2 + math.pi * R**2))
        return out
    nx, ny = g.shape
    Lx, Ly = g.domain.Lx, g.domain.Ly
    hx, hy = Lx / nx, Ly / ny
    index = np.arange(g.size).reshape(nx, ny)
    xc = (np.arange(nx) + 0.5) * hx
    yc = (np.arange(ny) + 0.5) * hy
    cx, cy = center
    sides = (
        (index[0, :], np.zeros(ny), yc, (-1.0, 0.0), hy),
        (index[-1, :], np.full(ny, Lx), yc, (1.0, 0.0), hy),
        (index[:, 0], xc, np.zeros(nx), (0.0, -1.0), hx),
        (index[:, -1], xc, np.full(nx, Ly), (0.0, 1.0), hx),
    )
    for cells, fx, fy, (nx_, ny_), area in sides:
        dx, dy = fx - cx, fy - cy
        dn = -4.0 * math.pi * (dx * nx_ + dy * ny_) / (eta**2 + math.pi * (dx**2 + dy**2))
        np.add.at(out, cells, area * dn)
    return out


def disk_shift(R: float) -> float:
    """Lower bound shift for the centered bubble in a disk of radius ``R``."""
    return 2.0 * math.log(1.0 + math.pi * R**2) + 2.0 / (math.pi * R**2)


def flat_edge_radius(p: ModelParams, domain: Rectangle, eta0: float) -> float:
    """Largest half-disk radius ``a`` meeting the smallness conditions for ``eta0``.

    ``a`` must keep the half-disk inside the rectangle, satisfy
    ``eta0^2 + pi a^2 < 1`` and ``eta0^2 < (M - 4 pi D) pi a^4 / (32 D |Omega|)``.
    """
    a = min(math.sqrt((1.0 - eta0**2) / math.pi), 0.5 * domain.Lx, domain.Ly, 1.0)
    a *= 1.0 - 1e-9
    budget = (p.M - 4.0 * math.pi * p.D) * math.pi * a**4 / (32.0 * p.D * domain.area())
    if not eta0**2 < budget:
        raise ValueError(
            f"eta0={eta0} too large for the flat-boundary construction (needs eta0^2 < {budget:.4g})"
        )
    return a


def flat_shift(p: ModelParams, domain: Rectangle, a: float) -> float:
    R = 0.5 * domain.diameter
    return (2.0 * math.log(1.0 + 4.0 * math.pi * R**2)
            + (1.0 + p.M / (16.0 * math.pi * p.D)) / domain.area()
            + 4.0 * abs(math.log(a)))


def bubble_initial_data(eta: float, p: ModelParams, g: Grid,
                        variant: BubbleVariant = BubbleVariant.DISK_CENTER,
                        eta0: Optional[float] = None) -> BubbleData:
    """Assemble the bubble triple of total mass ``M``.

    The masses ``U = M - 8 pi D ||e^xi||_1`` and ``V = 8 pi D ||e^xi||_1`` use
    the grid quadrature of ``||e^xi||_1``, so the discrete mass is exactly
    ``M`` up to round-off.  ``eta0`` (flat boundary only) is the largest
    scale the geometric constants must accommodate; it defaults to ``eta``.
    """
    variant = BubbleVariant(variant)
    center = bubble_center(g, variant)
    xi, Xi = bubble_profile(eta, center, g)
    edge_radius = None
    if variant is BubbleVariant.DISK_CENTER:
        nu = disk_shift(g.domain.R)
    else:
        edge_radius = flat_edge_radius(p, g.domain, eta if eta0 is None else eta0)
        nu = flat_shift(p, g.domain, edge_radius)
        logger.info("flat-boundary bubble: a=%.6g, nu1=%.6g", edge_radius, nu)

    profile = np.exp(xi)
    e_norm = integrate(profile, g)
    V = 8.0 * math.pi * p.D * e_norm
    U = p.M - V
    if U <= 0:
        raise ValueError(f"mass M={p.M:.6g} too small for eta={eta}: moving mass U={U:.6g} <= 0")
    u = U * profile / e_norm
    v = V * profile / e_norm
    w = Xi + nu
    state = State(0.0, u, v, w, g, w_inflow=bubble_boundary_flux(eta, center, g))

    mass_err = abs(state.mass - p.M) / p.M
    if mass_err > MASS_RTOL:
        raise InvariantViolation(f"bubble mass off by {mass_err:.2e} (relative)")
    if w.min() < 0:
        raise InvariantViolation(f"bubble chemoattractant negative: min w = {w.min():.3e}")
    return BubbleData(eta=eta, variant=variant, nu_shift=nu, U_eta=U, V_eta=V, state=state,
                      edge_radius=edge_radius)


def concentration_radius(u: np.ndarray, g: Grid) -> float:
    """Radius of the disk whose area equals the region where ``u >= max(u)/2``."""
    top = u >= 0.5 * u.max()
    return math.sqrt(float(g.volumes[top].sum()) / math.pi)


def sweep_threshold(p: ModelParams, variant: BubbleVariant) -> float:
    """Mass above which the sweep must drive the energy down."""
    return critical_mass(p, radial=BubbleVariant(variant) is BubbleVariant.DISK_CENTER)


def halving_decrement(p: ModelParams, variant: BubbleVariant) -> float:
    """Leading-order change of the energy when ``eta`` is halved.

    Equals ``2 (Mc - M) ln 2`` with ``Mc`` the threshold of the variant.
    """
    return 2.0 * (sweep_threshold(p, variant) - p.M) * math.log(2.0)


def required_resolution(g: Grid, eta_min: float) -> int:
    if g.radial:
        extent = g.domain.R
    else:
        extent = max(g.domain.Lx, g.domain.Ly)
    return math.ceil(CELLS_PER_ETA * extent / eta_min)


@dataclass
class SweepRow:
    eta: float
    L: float
    F: float
    U_eta: float
    V_eta: float
    min_w: float

    COLUMNS = ("eta", "L", "F", "U_eta", "V_eta", "min_w")

    def as_tuple(self):
        return (self.eta, self.L, self.F, self.U_eta, self.V_eta, self.min_w)


@dataclass
class SweepResult:
    rows: List[SweepRow]
    supercritical: bool
    nu_shift: float
    edge_radius: Optional[float] = None

    def decrements(self) -> np.ndarray:
        return np.diff([r.L for r in self.rows])


def _validate_etas(etas: Sequence[float]) -> List[float]:
    etas = [float(e) for e in etas]
    if not etas:
        raise ValueError("eta list is empty")
    if any(not 0 < e < 1 for e in etas):
        raise ValueError("every eta must lie in (0, 1)")
    if any(b >= a for a, b in zip(etas, etas[1:])):
        raise ValueError(f"eta list must be strictly decreasing, got {etas}")
    return etas


def eta_sweep(etas: Sequence[float], p: ModelParams, g: Grid,
              variant: BubbleVariant = BubbleVariant.DISK_CENTER, jobs: int = 1) -> SweepResult:
    """Evaluate the Liapunov functional on bubbles of decreasing scale.

    Raises :class:`UnderResolvedError` when ``h > eta_min / 8`` and
    :class:`InvariantViolation` when a supercritical sweep is not strictly
    decreasing.
    """
    etas = _validate_etas(etas)
    if g.h > etas[-1] / CELLS_PER_ETA:
        need = required_resolution(g, etas[-1])
        raise UnderResolvedError(
            f"grid spacing {g.h:.3g} does not resolve eta={etas[-1]} (need h <= eta/{CELLS_PER_ETA}, "
            f"i.e. n >= {need})", need)
    variant = BubbleVariant(variant)

    def evaluate(eta):
        data = bubble_initial_data(eta, p, g, variant, eta0=etas[0])
        _, Xi = bubble_profile(eta, bubble_center(g, variant), g)
        row = SweepRow(eta, liapunov(data.state, p).L_total, free_energy_F(Xi, p, g),
                       data.U_eta, data.V_eta, float(data.state.w.min()))
        return row, data

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            out = list(pool.map(evaluate, etas))
    else:
        out = [evaluate(e) for e in etas]
    rows = [r for r, _ in out]
    result = SweepResult(rows=rows, supercritical=p.M > sweep_threshold(p, variant),
                         nu_shift=out[0][1].nu_shift, edge_radius=out[0][1].edge_radius)
    if result.supercritical and np.any(result.decrements() >= 0):
        raise InvariantViolation(
            "supercritical sweep is not strictly decreasing: L = "
            + ", ".join(f"{r.L:.6g}" for r in rows))
    return result
