"""Discrete Neumann Laplacian, Helmholtz solves and Scharfetter-Gummel drift-diffusion.

All operators act on cell averages and use two-point fluxes over the
interior faces of a :class:`~chemosplit.grid.Grid`.  Boundary faces carry
zero flux, which is the discrete no-flux condition.

Sign conventions: the *stiffness* ``S`` is the symmetric positive
semidefinite matrix with ``(S f)_i = -V_i (lap f)_i``, so that
``f . S f`` is the face-based Dirichlet energy and ``sum V w lap w = -|grad w|^2``
holds exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import cg, spsolve

from .grid import Grid

logger = logging.getLogger(__name__)

HELMHOLTZ_RTOL = 1e-10
BERNOULLI_SERIES_CUTOFF = 1e-4


class SingularSystemError(ArithmeticError):
    """Pure Neumann problem with a right-hand side of nonzero mean."""


class SolverConvergenceError(ArithmeticError):
    """An iterative solve missed its residual target."""

    def __init__(self, message, iterations=None, residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


def _scatter(g: Grid, face_values: np.ndarray) -> np.ndarray:
    """Net inflow per cell for a flux ``face_values`` oriented left -> right."""
    out = np.bincount(g.right, weights=face_values, minlength=g.size)
    out -= np.bincount(g.left, weights=face_values, minlength=g.size)
    return out


def face_jumps(f: np.ndarray, g: Grid) -> np.ndarray:
    """``f_right - f_left`` on every interior face."""
    return f[g.right] - f[g.left]


def neumann_laplacian(f, g: Grid, boundary_inflow=None) -> np.ndarray:
    """Cell-averaged ``lap f`` with zero-flux boundary faces.

    ``boundary_inflow`` optionally supplies, per cell, the integral of the
    outward normal derivative of ``f`` over that cell's boundary faces.  It
    is only used to evaluate functionals of potentials given in closed form
    that do not satisfy the no-flux condition.
    """
    f = g.check(f)
    flux = g.transmissibility * face_jumps(f, g)
    net = -_scatter(g, flux)
    if boundary_inflow is not None:
        net = net + g.check(boundary_inflow, "boundary_inflow")
    return net / g.volumes


def dirichlet_energy(f, g: Grid) -> float:
    """Face-based ``||grad f||_2^2 = sum_faces (A/d) (f_j - f_i)^2``."""
    f = g.check(f)
    return float(np.dot(g.transmissibility, face_jumps(f, g) ** 2))


def stiffness_matrix(g: Grid) -> sp.csr_matrix:
    t = g.transmissibility
    n = g.size
    rows = np.concatenate([g.left, g.right, g.left, g.right])
    cols = np.concatenate([g.right, g.left, g.left, g.right])
    vals = np.concatenate([-t, -t, t, t])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


@dataclass(frozen=True)
class HelmholtzProblem:
    """``sigma f - kappa lap f = rhs`` with no-flux boundaries."""

    sigma: float
    kappa: float
    grid: Grid

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa!r}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma!r}")

    def apply(self, f) -> np.ndarray:
        return self.sigma * np.asarray(f) - self.kappa * neumann_laplacian(f, self.grid)


def _l2(values: np.ndarray, g: Grid) -> float:
    return float(np.sqrt(np.dot(values**2, g.volumes)))


def operator_norm(p: HelmholtzProblem) -> float:
    """Row-sum bound ``sigma + 2 kappa max_i (sum_faces T) / V_i`` on ``||sigma - kappa lap||``."""
    g = p.grid
    t = g.transmissibility
    total = np.bincount(g.left, t, g.size) + np.bincount(g.right, t, g.size)
    return p.sigma + 2.0 * p.kappa * float(np.max(total / g.volumes))


def _tridiagonal_bands(g: Grid, diag: np.ndarray, off: np.ndarray) -> np.ndarray:
    # symmetric banded storage for solve_banded((1, 1), ...)
    ab = np.zeros((3, g.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return ab


def helmholtz_solve(p: HelmholtzProblem, rhs) -> np.ndarray:
    """Solve ``sigma f - kappa lap f = rhs``.

    Radial grids use banded (tridiagonal) elimination.  Rectangular grids use
    conjugate gradients on the volume-weighted symmetric system with a
    diagonal preconditioner.  A constant ``rhs`` has the exact constant
    solution ``rhs / sigma`` and skips the solver.  The residual is checked
    in the discrete L2 norm as a normwise backward error,
    ``||r|| <= 1e-10 (||rhs|| + ||A|| ||f||)``, since round-off in applying
    the operator grows like ``h^-2 ||f||``.

    Raises
    ------
    SingularSystemError
        ``sigma == 0`` and ``rhs`` does not have zero mean.
    SolverConvergenceError
        The residual target was missed.
    """
    g = p.grid
    rhs = g.check(rhs, "rhs")
    rhs_norm = _l2(rhs, g)
    if rhs_norm == 0.0:
        return np.zeros(g.size)
    singular = p.sigma == 0
    if not singular and np.ptp(rhs) == 0.0:
        return rhs / p.sigma
    b = g.volumes * rhs
    if singular:
        mean = b.sum() / g.volumes.sum()
        if abs(mean) * np.sqrt(g.volumes.sum()) > 1e-12 * rhs_norm:
            raise SingularSystemError(
                f"pure Neumann Helmholtz problem needs a zero-mean right-hand side (mean {mean:.3e})"
            )

    info = 0
    if g.radial and not singular:
        t = g.transmissibility
        diag = p.sigma * g.volumes + p.kappa * (
            np.bincount(g.left, t, g.size) + np.bincount(g.right, t, g.size)
        )
        f = solve_banded((1, 1), _tridiagonal_bands(g, diag, -p.kappa * t), b)
    else:
        A = (p.sigma * sp.diags(g.volumes) + p.kappa * stiffness_matrix(g)).tocsr()
        precond = sp.diags(1.0 / A.diagonal())
        iterations = 0

        def count(_):
            nonlocal iterations
            iterations += 1

        f, info = cg(A, b, rtol=0.1 * HELMHOLTZ_RTOL, atol=0.0, M=precond,
                     maxiter=20 * g.size, callback=count)
        if singular:
            f = f - np.dot(f, g.volumes) / g.volumes.sum()

    residual = _l2(p.apply(f) - rhs, g) / (rhs_norm + operator_norm(p) * _l2(f, g))
    if info != 0 or residual > HELMHOLTZ_RTOL:
        raise SolverConvergenceError(
            f"Helmholtz solve missed tolerance: relative residual {residual:.3e}, cg info {info}",
            residual=residual,
        )
    return f


def bernoulli(s) -> np.ndarray:
    """``B(s) = s / (e^s - 1)`` with ``B(0) = 1``; Taylor branch for ``|s| < 1e-4``."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    small = np.abs(s) < BERNOULLI_SERIES_CUTOFF
    ss = s[small]
    out[small] = 1.0 - ss / 2.0 + ss**2 / 12.0 - ss**4 / 720.0
    big = s[~small]
    with np.errstate(over="ignore"):
        out[~small] = big / np.expm1(big)
    return out


def sg_face_coefficients(w, g: Grid):
    """Transmissibility-weighted ``(B(-s), B(s))`` per face, ``s = w_right - w_left``.

    The flux from left to right is ``c_minus * u_left - c_plus * u_right``.
    """
    s = face_jumps(g.check(w, "w"), g)
    t = g.transmissibility
    return t * bernoulli(-s), t * bernoulli(s)


def chemotactic_divergence(u, w, g: Grid) -> np.ndarray:
    """Cell-averaged ``div(grad u - u grad w)`` with Scharfetter-Gummel fluxes."""
    u = g.check(u, "u")
    c_minus, c_plus = sg_face_coefficients(w, g)
    flux = c_minus * u[g.left] - c_plus * u[g.right]
    return _scatter(g, flux) / g.volumes


def drift_diffusion_solve(shift: float, tau: float, w, rhs, g: Grid) -> np.ndarray:
    """Solve ``shift*u - tau*div(grad u - u grad w) = rhs`` for ``u``.

    The volume-weighted matrix has positive diagonal, nonpositive
    off-diagonals and strictly positive column sums, so its inverse is
    entrywise nonnegative.
    """
    rhs = g.check(rhs, "rhs")
    c_minus, c_plus = sg_face_coefficients(w, g)
    n = g.size
    # row l gains tau*c_minus on its diagonal and -tau*c_plus towards r; mirrored for r
    diag = shift * g.volumes + tau * (
        np.bincount(g.left, c_minus, n) + np.bincount(g.right, c_plus, n)
    )
    b = g.volumes * rhs
    if g.radial:
        ab = np.zeros((3, n))
        ab[0, 1:] = -tau * c_plus    # A[l, r]
        ab[1] = diag
        ab[2, :-1] = -tau * c_minus  # A[r, l]
        return solve_banded((1, 1), ab, b)
    rows = np.concatenate([np.arange(n), g.left, g.right])
    cols = np.concatenate([np.arange(n), g.right, g.left])
    vals = np.concatenate([diag, -tau * c_plus, -tau * c_minus])
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n, n))
    return spsolve(A, b)
