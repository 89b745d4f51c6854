import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from chemosplit import blowup
from chemosplit.blowup import (BubbleVariant, InvariantViolation, UnderResolvedError,
                               bubble_boundary_flux, bubble_formula, bubble_initial_data,
                               bubble_profile, concentration_radius, disk_shift, eta_sweep,
                               halving_decrement, required_resolution)
from chemosplit.grid import build_radial_grid, build_rect_grid, integrate
from chemosplit.model import ModelParams
from chemosplit.operators import dirichlet_energy, neumann_laplacian

SUPER = ModelParams(D=1.0, alpha=1.0, theta=1.0, M=32 * math.pi)
SUB = ModelParams(D=1.0, alpha=1.0, theta=1.0, M=8 * math.pi)
DISK = BubbleVariant.DISK_CENTER
FLAT = BubbleVariant.FLAT_BOUNDARY


@pytest.fixture(scope="module")
def disk1024():
    return build_radial_grid(1.0, 1024)


@pytest.fixture(scope="module")
def square():
    return build_rect_grid(1.0, 1.0, 96, 96)


# ---- independent quadrature oracles on the unit disk ------------------------------------

def grad_xi_sq(eta, R=1.0):
    """||grad xi_eta||^2 on B_R by adaptive quadrature of the radial integrand."""
    f = lambda r: (4 * math.pi * r / (eta**2 + math.pi * r**2)) ** 2 * 2 * math.pi * r
    return quad(f, 0, R, points=[eta], limit=200, epsabs=0, epsrel=1e-12)[0]


def log_exp_Xi(eta, R=1.0):
    """ln ||e^{Xi_eta}||_1 with Xi the zero-mean shift, by quadrature."""
    xi = lambda r: 2 * math.log(eta / (eta**2 + math.pi * r**2))
    mean = quad(lambda r: xi(r) * 2 * math.pi * r, 0, R, points=[eta], epsabs=0,
                epsrel=1e-12)[0] / (math.pi * R**2)
    mass = quad(lambda r: math.exp(xi(r)) * 2 * math.pi * r, 0, R, points=[eta], epsabs=0,
                epsrel=1e-12)[0]
    return math.log(mass) - mean


def test_quadrature_oracle_exp_norm():
    for eta in (0.5, 0.1):
        val = quad(lambda r: (eta / (eta**2 + math.pi * r**2)) ** 2 * 2 * math.pi * r, 0, 1)[0]
        assert val == pytest.approx(math.pi / (eta**2 + math.pi), rel=1e-12)


def test_ingredient_asymptotics_by_quadrature():
    etas = [0.4, 0.2, 0.1, 0.05, 0.025, 0.0125]
    g = np.array([grad_xi_sq(e) for e in etas])
    lx = np.array([log_exp_Xi(e) for e in etas])
    dg, dl = np.diff(g), np.diff(lx)
    # each halving adds 32 pi ln 2 to ||grad xi||^2 and 2 ln 2 to ln ||e^Xi||
    assert dg[-1] == pytest.approx(32 * math.pi * math.log(2), rel=0.02)
    assert dl[-1] == pytest.approx(2 * math.log(2), rel=0.02)
    assert np.all(np.abs(np.diff(dg)) >= 0) and abs(dg[-1] - dg[-2]) < abs(dg[1] - dg[0])


@pytest.mark.parametrize("eta", [0.2, 0.05])
def test_discrete_ingredients_match_quadrature(eta):
    g = build_radial_grid(1.0, 4096)
    xi, Xi = bubble_profile(eta, (0.0, 0.0), g)
    assert dirichlet_energy(xi, g) == pytest.approx(grad_xi_sq(eta), rel=2e-3)
    log_exp = math.log(integrate(np.exp(Xi), g))
    assert log_exp == pytest.approx(log_exp_Xi(eta), rel=1e-4)


# ---- profile ----------------------------------------------------------------------------

def test_profile_center_value():
    for eta in (0.9, 0.3, 0.01):
        assert bubble_formula(eta, 0.0) == pytest.approx(2 * math.log(1 / eta), rel=1e-15)


@pytest.mark.parametrize("grid, center", [(build_radial_grid(1.0, 128), (0.0, 0.0)),
                                          (build_rect_grid(2.0, 1.0, 32, 16), (1.0, 0.0))])
def test_profile_zero_mean(grid, center):
    xi, Xi = bubble_profile(0.1, center, grid)
    area = grid.volumes.sum()
    assert abs(integrate(Xi, grid)) <= 1e-10 * area * np.max(np.abs(xi))
    assert np.ptp(xi - Xi) <= 1e-14 * np.max(np.abs(xi))


def test_profile_rejects_eta():
    g = build_radial_grid(1.0, 16)
    for eta in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            bubble_profile(eta, (0.0, 0.0), g)


def test_liouville_equation_second_order():
    # -lap xi = 8 pi e^xi, using the closed-form boundary flux for the outer cell
    eta, errs = 0.25, []
    for n in (64, 128, 256):
        g = build_radial_grid(1.0, n)
        xi, _ = bubble_profile(eta, (0.0, 0.0), g)
        flux = bubble_boundary_flux(eta, (0.0, 0.0), g)
        res = -neumann_laplacian(xi, g, flux) - 8 * math.pi * np.exp(xi)
        errs.append(np.max(np.abs(res[g.coords[0] < 0.9])))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 1.9)


def test_boundary_flux_disk_divergence_theorem():
    # the flux through r = R equals -8 pi ||e^xi||_1 exactly in the continuum
    g = build_radial_grid(1.0, 32)
    eta = 0.3
    total = bubble_boundary_flux(eta, (0.0, 0.0), g).sum()
    assert total == pytest.approx(-8 * math.pi * math.pi / (eta**2 + math.pi), rel=1e-13)


def test_boundary_flux_rectangle_divergence_theorem():
    errs = []
    for n in (64, 128):
        g = build_rect_grid(1.0, 1.0, n, n)
        xi, _ = bubble_profile(0.3, (0.5, 0.0), g)
        total = bubble_boundary_flux(0.3, (0.5, 0.0), g).sum()
        errs.append(abs(total + 8 * math.pi * integrate(np.exp(xi), g)))
    assert errs[1] < errs[0] / 3.5
    assert errs[1] < 1e-3


# ---- initial data ------------------------------------------------------------------------

def test_disk_bubble_masses():
    g = build_radial_grid(1.0, 4096)
    data = bubble_initial_data(0.5, SUPER, g, DISK)
    V = 8 * math.pi * math.pi / (0.25 + math.pi)
    assert data.V_eta == pytest.approx(V, rel=1e-4)
    assert data.U_eta == pytest.approx(SUPER.M - V, rel=1e-4)
    assert data.U_eta + data.V_eta == pytest.approx(SUPER.M, rel=1e-15)
    assert data.nu_shift == pytest.approx(2 * math.log(1 + math.pi) + 2 / math.pi)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.02, 0.95))
def test_disk_bubble_invariants(eta):
    g = build_radial_grid(1.0, 512)
    data = bubble_initial_data(eta, SUPER, g, DISK)
    s = data.state
    assert abs(s.mass - SUPER.M) <= 1e-10 * SUPER.M
    assert s.u.min() >= 0 and s.v.min() >= 0 and s.w.min() >= 0
    theta = SUPER.theta
    assert theta / (1 + theta) <= data.U_eta / SUPER.M <= 1.0


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.4))
def test_flat_bubble_invariants(eta):
    g = build_rect_grid(1.0, 1.0, 48, 48)
    data = bubble_initial_data(eta, SUPER, g, FLAT, eta0=0.4)
    s = data.state
    assert abs(s.mass - SUPER.M) <= 1e-10 * SUPER.M
    assert s.w.min() >= 0
    assert data.edge_radius is not None and 0 < data.edge_radius <= 0.5


def test_min_w_approaches_zero_far_away():
    g = build_radial_grid(1.0, 2048)
    mins = [bubble_initial_data(e, SUPER, g, DISK).state.w.min() for e in (0.4, 0.1, 0.025)]
    assert all(m >= 0 for m in mins)
    assert mins[-1] < mins[0]


def test_rejects_too_small_mass():
    g = build_radial_grid(1.0, 64)
    with pytest.raises(ValueError, match="too small"):
        bubble_initial_data(0.3, ModelParams(D=1.0, alpha=1.0, theta=1.0, M=10.0), g, DISK)


def test_variant_grid_mismatch():
    with pytest.raises(ValueError):
        bubble_initial_data(0.3, SUPER, build_rect_grid(1.0, 1.0, 8, 8), DISK)
    with pytest.raises(ValueError):
        bubble_initial_data(0.3, SUPER, build_radial_grid(1.0, 8), FLAT)


def test_concentration_radius():
    g = build_radial_grid(1.0, 100)
    assert concentration_radius(np.ones(g.size), g) == pytest.approx(1.0)
    u = np.where(g.coords[0] < 0.3, 5.0, 1.0)
    assert concentration_radius(u, g) == pytest.approx(0.3)


def test_predicted_decrements():
    assert halving_decrement(SUPER, DISK) == pytest.approx(-32 * math.pi * math.log(2))
    assert halving_decrement(SUPER, FLAT) == pytest.approx(2 * (8 * math.pi - 32 * math.pi) * math.log(2))


# ---- sweeps ------------------------------------------------------------------------------

def test_supercritical_disk_sweep_decreasing(disk1024):
    res = eta_sweep([0.4, 0.2, 0.1], SUPER, disk1024, DISK)
    assert res.supercritical
    assert np.all(res.decrements() < 0)
    assert [r.eta for r in res.rows] == [0.4, 0.2, 0.1]
    assert all(r.min_w >= 0 for r in res.rows)
    F = [r.F for r in res.rows]
    assert np.all(np.diff(F) < 0)


def test_sweep_threads_agree(disk1024):
    a = eta_sweep([0.4, 0.2, 0.1], SUPER, disk1024, DISK, jobs=1)
    b = eta_sweep([0.4, 0.2, 0.1], SUPER, disk1024, DISK, jobs=3)
    assert [r.as_tuple() for r in a.rows] == [r.as_tuple() for r in b.rows]


def test_supercritical_flat_sweep_decreasing(square):
    res = eta_sweep([0.4, 0.2, 0.1], SUPER, square, FLAT)
    assert res.supercritical and np.all(res.decrements() < 0)
    assert res.edge_radius is not None


def test_subcritical_sweep_emits_table(disk1024):
    res = eta_sweep([0.4, 0.2, 0.1], SUB, disk1024, DISK)
    assert not res.supercritical
    assert len(res.rows) == 3 and all(np.isfinite(r.L) for r in res.rows)


def test_sweep_under_resolved():
    g = build_radial_grid(1.0, 64)
    with pytest.raises(UnderResolvedError) as info:
        eta_sweep([0.4, 0.05], SUPER, g, DISK)
    assert info.value.required_n == 160 == required_resolution(g, 0.05)
    assert "160" in str(info.value)


@pytest.mark.parametrize("etas", [[0.2, 0.4], [0.4, 0.4], [], [0.5, 1.2]])
def test_sweep_rejects_bad_eta_lists(etas):
    with pytest.raises(ValueError):
        eta_sweep(etas, SUPER, build_radial_grid(1.0, 1024), DISK)


def test_sweep_flags_non_monotone(monkeypatch, disk1024):
    class Fake:
        def __init__(self, L):
            self.L_total = L
    values = iter([1.0, 2.0, 3.0])
    monkeypatch.setattr(blowup, "liapunov", lambda s, p: Fake(next(values)))
    with pytest.raises(InvariantViolation):
        eta_sweep([0.4, 0.2, 0.1], SUPER, disk1024, DISK)


def test_disk_shift_bounds_profile():
    for R in (0.5, 1.0, 2.0):
        g = build_radial_grid(R, 512)
        for eta in (0.5, 0.1):
            _, Xi = bubble_profile(eta, (0.0, 0.0), g)
            assert Xi.min() >= -disk_shift(R)
