"""Initial triples of prescribed total mass."""
from __future__ import annotations

import logging
import math

import numpy as np

from .blowup import BubbleVariant, bubble_initial_data
from .dynamics import State, homogeneous_state
from .grid import Grid, read_fields_csv
from .model import ModelParams
from .steady import solve_steady

logger = logging.getLogger(__name__)


def smooth_modes(g: Grid, rng: np.random.Generator, n_modes: int = 3) -> np.ndarray:
    """Random combination of low Neumann cosine modes, scaled to sup-norm 1."""
    if g.radial:
        r = g.coords[0] / g.domain.R
        field = sum(rng.uniform(-1, 1) * np.cos(k * math.pi * r) for k in range(1, n_modes + 1))
    else:
        x = g.coords[0] / g.domain.Lx
        y = g.coords[1] / g.domain.Ly
        field = sum(rng.uniform(-1, 1) * np.cos(k * math.pi * x) * np.cos(l * math.pi * y)
                    for k in range(n_modes) for l in range(n_modes) if k + l > 0)
    return field / np.max(np.abs(field))


def rescale_to_mass(s: State, M: float) -> State:
    mass = s.mass
    if mass <= 0:
        raise ValueError("initial u + v has no mass to rescale")
    k = M / mass
    return State(s.t, s.u * k, s.v * k, s.w, s.grid)


def perturbed(base: State, amplitude: float, p: ModelParams, rng: np.random.Generator) -> State:
    """Multiply each field by ``1 + amplitude * mode`` and restore the mass ``M``."""
    if amplitude >= 1:
        raise ValueError("relative perturbation amplitude must be < 1 to keep fields positive")
    g = base.grid
    fields = [f * (1.0 + amplitude * smooth_modes(g, rng)) for f in (base.u, base.v, base.w)]
    return rescale_to_mass(State(0.0, *fields, g), p.M)


def homogeneous(p: ModelParams, g: Grid, perturbation: float = 0.0, seed: int = 0) -> State:
    base = homogeneous_state(p, g)
    if perturbation == 0:
        return base
    return perturbed(base, perturbation, p, np.random.default_rng(seed))


def bubble(p: ModelParams, g: Grid, eta: float, variant=None) -> State:
    if variant is None:
        variant = BubbleVariant.DISK_CENTER if g.radial else BubbleVariant.FLAT_BOUNDARY
    return bubble_initial_data(eta, p, g, variant).state


def from_file(path, p: ModelParams, g: Grid) -> State:
    fields = read_fields_csv(path, g)
    missing = {"u", "v", "w"} - set(fields)
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    s = State(0.0, fields["u"], fields["v"], fields["w"], g)
    if min(s.u.min(), s.v.min(), s.w.min()) < 0:
        raise ValueError(f"{path}: initial fields must be nonnegative")
    if not math.isclose(s.mass, p.M, rel_tol=1e-10):
        logger.info("rescaling file data from mass %.6g to M=%.6g", s.mass, p.M)
        s = rescale_to_mass(s, p.M)
    return s


def steady_perturbation(p: ModelParams, g: Grid, amplitude: float, seed: int = 0) -> State:
    ss = solve_steady(p, g)
    if not ss.converged:
        raise ArithmeticError("steady solve for the perturbed initial state did not converge")
    return perturbed(ss.to_state(), amplitude, p, np.random.default_rng(seed))
