"""Physical parameters, domains, entropy densities and critical masses.

The system evolved by this package is

    u_t = div(grad u - u grad w) + theta v - u
    v_t = u - theta v
    w_t = D lap w - alpha w + v

on a bounded planar domain with no-flux boundary conditions.  The total
population ``u + v`` carries a conserved mass ``M``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.special import xlogy


class ParameterError(ValueError):
    """Raised for physically inadmissible parameters."""


@dataclass(frozen=True)
class ModelParams:
    D: float
    alpha: float
    theta: float
    M: float

    def __post_init__(self):
        for name in ("D", "alpha", "theta", "M"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class RadialDisk:
    R: float

    def __post_init__(self):
        if not (math.isfinite(self.R) and self.R > 0):
            raise ParameterError(f"disk radius must be positive, got {self.R!r}")

    def area(self) -> float:
        return math.pi * self.R**2

    @property
    def diameter(self) -> float:
        return 2.0 * self.R


@dataclass(frozen=True)
class Rectangle:
    Lx: float
    Ly: float

    def __post_init__(self):
        for name in ("Lx", "Ly"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be positive, got {value!r}")

    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def diameter(self) -> float:
        return math.hypot(self.Lx, self.Ly)


DomainSpec = Union[RadialDisk, Rectangle]


def _check_nonnegative(r):
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValueError("entropy density is only defined for r >= 0")
    return arr


def entropy_L(r):
    """Boltzmann entropy density ``r ln r - r + 1`` (with ``0 ln 0 = 0``).

    Accepts scalars or arrays; returns the same shape.
    """
    arr = _check_nonnegative(r)
    val = xlogy(arr, arr) - arr + 1.0
    return float(val) if np.ndim(val) == 0 else val


def entropy_L_theta(r, theta: float):
    """Scaled entropy density ``L(theta r) / theta = r ln(theta r) - r + 1/theta``."""
    if not theta > 0:
        raise ParameterError(f"theta must be positive, got {theta!r}")
    arr = _check_nonnegative(r)
    # ln(theta r) split so that theta * r cannot underflow to 0 for tiny r
    val = xlogy(arr, arr) + arr * math.log(theta) - arr + 1.0 / theta
    return float(val) if np.ndim(val) == 0 else val


def critical_mass(params: ModelParams, radial: bool = False) -> float:
    """Threshold mass: ``4 pi (1+theta) D``, doubled for radial data in a disk."""
    base = 4.0 * math.pi * (1.0 + params.theta) * params.D
    return 2.0 * base if radial else base


def excluded_masses(params: ModelParams, eps: float = 1e-6) -> Callable[[float], bool]:
    """Predicate flagging masses close to an integer multiple of ``4 pi (1+theta) D``.

    The infinite-time blowup statement on general domains excludes these
    multiples.  ``eps`` is a relative tolerance on the distance to the
    nearest multiple.
    """
    unit = critical_mass(params, radial=False)

    def is_excluded(mass: float) -> bool:
        k = round(mass / unit)
        if k < 1:
            return False
        return abs(mass - k * unit) <= eps * k * unit

    return is_excluded


def regime(params: ModelParams, radial: bool) -> str:
    """Label the mass as ``subcritical``, ``critical`` or ``supercritical``."""
    mc = critical_mass(params, radial=radial)
    if math.isclose(params.M, mc, rel_tol=1e-12):
        return "critical"
    return "subcritical" if params.M < mc else "supercritical"
